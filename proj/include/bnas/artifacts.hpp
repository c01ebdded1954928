#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "bnas/config_file.hpp"
#include "bnas/searcher.hpp"
#include "bnas/serialize.hpp"

#include "json.hpp"

namespace bnas {

constexpr const char* kToolVersion = "bnas 0.1.0";

// Layout of one run directory. Everything a pipeline run writes lives under
// runs/<config-hash>/ so reruns with the same config land on, and verify
// against, the same artifacts.
struct ArtifactPaths {
    std::filesystem::path root;

    std::filesystem::path config_txt() const { return root / "config.txt"; }
    std::filesystem::path teacher_ckpt() const { return root / "teacher.ckpt"; }
    std::filesystem::path features_ckpt() const { return root / "features.ckpt"; }
    std::filesystem::path block_ckpt(int block, Strategy s) const {
        return root / (block_stem(block, s) + ".ckpt");
    }
    std::filesystem::path block_curve(int block, Strategy s) const {
        return root / (block_stem(block, s) + ".curve.csv");
    }
    std::filesystem::path spos_ckpt() const { return root / "spos.ckpt"; }
    std::filesystem::path spos_curve() const { return root / "spos.curve.csv"; }
    std::filesystem::path ranking_csv(int block, Strategy s = Strategy::dna) const {
        return root / (ranking_stem(block, s) + ".csv");
    }
    std::filesystem::path ranking_sidecar(int block, Strategy s = Strategy::dna) const {
        return root / (ranking_stem(block, s) + ".sources.json");
    }
    std::filesystem::path cost_table_csv() const { return root / "cost_table.csv"; }
    std::filesystem::path search_txt(const Constraint& c) const {
        if (!c.active) return root / "search.unconstrained.arch";
        return root / ("search." + std::string(cost_metric_name(c.metric)) + "." + std::to_string(c.bound) + ".arch");
    }
    std::filesystem::path pareto_csv(CostMetric m) const {
        return root / ("pareto." + std::string(cost_metric_name(m)) + ".csv");
    }
    std::filesystem::path trials_csv() const { return root / "trials.csv"; }
    std::filesystem::path report_txt() const { return root / "rank_report.txt"; }
    std::filesystem::path manifest(const std::string& subcommand) const {
        return root / (subcommand + ".manifest.json");
    }

    static std::string block_stem(int block, Strategy s) {
        std::string stem = "block" + std::to_string(block);
        if (s != Strategy::dna) stem += std::string(".") + strategy_name(s);
        return stem;
    }
    static std::string ranking_stem(int block, Strategy s) {
        std::string stem = "ranking" + std::to_string(block);
        if (s != Strategy::dna) stem += std::string(".") + strategy_name(s);
        return stem;
    }
};

inline ArtifactPaths run_paths(const std::filesystem::path& out_root, const RunConfig& rc) {
    return ArtifactPaths{out_root / config_hash(rc)};
}

// Exit-3 contract: the message names both the missing file and the
// subcommand that produces it.
inline void require_artifact(const std::filesystem::path& p, const std::string& producer) {
    if (!std::filesystem::exists(p))
        throw MissingArtifactError("missing artifact '" + p.string() + "'; produce it with `bnas " + producer +
                                   "` first");
}

struct ManifestFile {
    std::filesystem::path path;
    std::string fingerprint;
};

// One manifest per subcommand run: config identity, seed, artifact
// fingerprints, version, duration.
inline void write_manifest(const ArtifactPaths& ap, const std::string& subcommand, const RunConfig& rc,
                           const std::vector<std::filesystem::path>& inputs,
                           const std::vector<std::filesystem::path>& outputs, double duration_seconds) {
    nlohmann::json j;
    j["config_hash"] = config_hash(rc);
    j["subcommand"] = subcommand;
    j["seed"] = rc.net.seed;
    j["tool_version"] = kToolVersion;
    j["duration_seconds"] = duration_seconds;
    j["inputs"] = nlohmann::json::array();
    for (const auto& p : inputs)
        j["inputs"].push_back({{"path", p.string()}, {"fingerprint", file_fingerprint(p)}});
    j["outputs"] = nlohmann::json::array();
    for (const auto& p : outputs)
        j["outputs"].push_back({{"path", p.string()}, {"fingerprint", file_fingerprint(p)}});
    write_file_atomic(ap.manifest(subcommand), j.dump(2) + "\n");
}

// Architecture descriptor: the searcher's output format, consumable by the
// stand-alone builder and the benchmark. Comment lines record metrics.
inline std::string arch_descriptor_text(const ArchEncoding& arch, const SearchResult* result = nullptr) {
    std::ostringstream os;
    if (result) {
        os << "# loss " << csv_double(result->loss) << "\n";
        os << "# params " << result->cost.params << "\n";
        os << "# madds " << result->cost.madds << "\n";
        os << "# visited " << result->visited << "\n";
        os << "# proof " << result->proof << "\n";
    }
    for (size_t b = 0; b < arch.size(); ++b)
        os << "block " << (b + 1) << " cell " << arch[b].cell << " ops " << path_to_string(arch[b].ops) << "\n";
    return os.str();
}

inline ArchEncoding arch_descriptor_parse(const std::string& text) {
    ArchEncoding arch;
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        lineno += 1;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() != 6 || tok[0] != "block" || tok[2] != "cell" || tok[4] != "ops")
            throw DataError("arch descriptor line " + std::to_string(lineno) +
                            ": want `block <i> cell <c> ops <o.o...>`");
        const size_t idx = size_t(std::stoll(tok[1]));
        if (idx != arch.size() + 1)
            throw DataError("arch descriptor line " + std::to_string(lineno) + ": blocks must appear in order");
        ArchChoice ch;
        ch.cell = int(std::stoll(tok[3]));
        ch.ops = path_from_string(tok[5]);
        arch.push_back(std::move(ch));
    }
    if (arch.empty()) throw DataError("arch descriptor has no block lines");
    return arch;
}

// Cost table CSV: a comment line pinning the producing config, then one row
// per stem/head/entry. Entry keys are 1-based blocks to match reports.
inline std::string cost_table_to_csv(const CostTable& t, const std::string& hash) {
    std::ostringstream os;
    os << "# config-hash " << hash << "\n";
    CsvWriter w({"kind", "block", "cell", "layer", "op", "params", "madds"});
    w.row({"stem", "", "", "", "", std::to_string(t.stem.params), std::to_string(t.stem.madds)});
    w.row({"head", "", "", "", "", std::to_string(t.head.params), std::to_string(t.head.madds)});
    for (const auto& [key, cost] : t.entries) {
        const auto& [b, c, l, o] = key;
        w.row({"entry", std::to_string(b + 1), std::to_string(c), std::to_string(l), std::to_string(o),
               std::to_string(cost.params), std::to_string(cost.madds)});
    }
    os << w.str();
    return os.str();
}

inline std::pair<std::string, CostTable> cost_table_from_csv(const std::string& text) {
    const size_t nl = text.find('\n');
    const std::string first = text.substr(0, nl == std::string::npos ? text.size() : nl);
    if (first.rfind("# config-hash ", 0) != 0) throw DataError("cost table is missing its config-hash line");
    std::string hash = first.substr(14);
    CostTable t;
    const auto rows = parse_csv(text.substr(nl + 1));
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != 7) throw DataError("cost table row has " + std::to_string(f.size()) + " fields");
        const Cost c{std::stoll(f[5]), std::stoll(f[6])};
        if (f[0] == "stem") {
            t.stem = c;
        } else if (f[0] == "head") {
            t.head = c;
        } else if (f[0] == "entry") {
            t.entries[{std::stoi(f[1]) - 1, std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4])}] = c;
        } else {
            throw DataError("cost table row kind '" + f[0] + "'");
        }
    }
    return {std::move(hash), std::move(t)};
}

// Parameter checkpoints ride the tensor container; curve CSVs ride plain text.
template <typename T>
void save_params(const ParameterSet<T>& ps, const std::filesystem::path& p) {
    save_container(ps.to_container(), p);
}

template <typename T>
void load_params(ParameterSet<T>& ps, const std::filesystem::path& p) {
    ps.load_container(load_container(p));
}

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace bnas
