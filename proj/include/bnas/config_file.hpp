#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "bnas/classifier.hpp"
#include "bnas/distill.hpp"
#include "bnas/rng.hpp"
#include "bnas/search_space.hpp"
#include "bnas/teacher.hpp"

namespace bnas {

// Everything one pipeline run needs: the search-space structure plus data,
// teacher, distillation, and benchmark knobs. Parsed from line-oriented
// key-value text; the canonical echo defines the run identity hash.
struct RunConfig {
    SupernetConfig net;

    // data
    int images_per_class = 100;
    double noise = 0.5;
    double val_fraction = 0.2;
    std::string data_dir;  // cifar10 batch files

    // teacher
    int teacher_epochs = 30;
    double teacher_lr = 3e-3;
    double accuracy_floor = 0.85;
    bool augment = false;

    // distillation
    DistillConfig distill;

    // benchmark
    int retrain_epochs = 30;
    double retrain_lr = 3e-3;
    int bench_archs = 16;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& key) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + s + "'");
    }
}

inline int64_t parse_int(const std::string& s, const std::string& key) {
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + s + "'");
    }
}

// "2x8,3x8" -> cells (depth 2 width 8), (depth 3 width 8)
inline std::vector<CellSpec> parse_cells(const std::string& s) {
    std::vector<CellSpec> cells;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        const size_t x = tok.find('x');
        if (x == std::string::npos) throw ConfigError("cell spec '" + tok + "' wants <depth>x<width>");
        CellSpec c;
        c.depth = int(parse_int(tok.substr(0, x), "block cells"));
        c.width = int(parse_int(tok.substr(x + 1), "block cells"));
        cells.push_back(c);
    }
    if (cells.empty()) throw ConfigError("block line has an empty cell list");
    return cells;
}

inline std::string cells_to_string(const std::vector<CellSpec>& cells) {
    std::string s;
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(cells[i].depth) + "x" + std::to_string(cells[i].width);
    }
    return s;
}

}  // namespace detail

// Line-oriented: `key value...`, '#' starts a comment, blank lines ignored.
// Unknown keys are errors so typos cannot silently change a run.
inline RunConfig parse_run_config(const std::string& text) {
    RunConfig rc;
    rc.net.blocks.clear();
    rc.net.ops.clear();

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
        const std::string& key = tok[0];
        const auto want = [&](size_t n) {
            if (tok.size() != n + 1)
                throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key + "' wants " +
                                  std::to_string(n) + " values, got " + std::to_string(tok.size() - 1));
        };
        if (key == "dataset") {
            want(1);
            if (tok[1] != "synthetic" && tok[1] != "cifar10")
                throw ConfigError("dataset must be synthetic or cifar10, got '" + tok[1] + "'");
            rc.net.dataset = tok[1];
        } else if (key == "data-dir") {
            want(1);
            rc.data_dir = tok[1];
        } else if (key == "seed") {
            want(1);
            rc.net.seed = uint64_t(detail::parse_int(tok[1], key));
        } else if (key == "input-size") {
            want(1);
            rc.net.input_size = int(detail::parse_int(tok[1], key));
        } else if (key == "input-channels") {
            want(1);
            rc.net.input_channels = int(detail::parse_int(tok[1], key));
        } else if (key == "stem-width") {
            want(1);
            rc.net.stem_width = int(detail::parse_int(tok[1], key));
        } else if (key == "classes") {
            want(1);
            rc.net.num_classes = int(detail::parse_int(tok[1], key));
        } else if (key == "op") {
            want(3);
            OpSpec op;
            op.kernel = int(detail::parse_int(tok[1], key));
            op.expansion = int(detail::parse_int(tok[2], key));
            op.se_ratio = detail::parse_double(tok[3], key);
            rc.net.ops.push_back(op);
        } else if (key == "block") {
            want(3);
            BlockSpec blk;
            blk.stride = int(detail::parse_int(tok[1], key));
            blk.teacher_out_width = int(detail::parse_int(tok[2], key));
            blk.cells = detail::parse_cells(tok[3]);
            rc.net.blocks.push_back(std::move(blk));
        } else if (key == "lambda") {
            if (tok.size() < 2) throw ConfigError("lambda wants at least one value");
            rc.net.lambda.clear();
            for (size_t i = 1; i < tok.size(); ++i) rc.net.lambda.push_back(detail::parse_double(tok[i], key));
        } else if (key == "images-per-class") {
            want(1);
            rc.images_per_class = int(detail::parse_int(tok[1], key));
        } else if (key == "noise") {
            want(1);
            rc.noise = detail::parse_double(tok[1], key);
        } else if (key == "val-fraction") {
            want(1);
            rc.val_fraction = detail::parse_double(tok[1], key);
        } else if (key == "teacher-epochs") {
            want(1);
            rc.teacher_epochs = int(detail::parse_int(tok[1], key));
        } else if (key == "teacher-lr") {
            want(1);
            rc.teacher_lr = detail::parse_double(tok[1], key);
        } else if (key == "accuracy-floor") {
            want(1);
            rc.accuracy_floor = detail::parse_double(tok[1], key);
        } else if (key == "augment") {
            want(1);
            rc.augment = detail::parse_int(tok[1], key) != 0;
        } else if (key == "epochs-per-cell") {
            want(1);
            rc.distill.epochs_per_cell = int(detail::parse_int(tok[1], key));
        } else if (key == "batch-size") {
            want(1);
            rc.distill.batch_size = int(detail::parse_int(tok[1], key));
        } else if (key == "lr-block1") {
            want(1);
            rc.distill.lr_block1 = detail::parse_double(tok[1], key);
        } else if (key == "lr-rest") {
            want(1);
            rc.distill.lr_rest = detail::parse_double(tok[1], key);
        } else if (key == "lr-decay") {
            want(1);
            rc.distill.lr_decay = detail::parse_double(tok[1], key);
        } else if (key == "optimizer") {
            want(1);
            rc.distill.rule = parse_optim_rule(tok[1]);
        } else if (key == "strategy") {
            want(1);
            rc.distill.strategy = parse_strategy(tok[1]);
        } else if (key == "retrain-epochs") {
            want(1);
            rc.retrain_epochs = int(detail::parse_int(tok[1], key));
        } else if (key == "retrain-lr") {
            want(1);
            rc.retrain_lr = detail::parse_double(tok[1], key);
        } else if (key == "bench-archs") {
            want(1);
            rc.bench_archs = int(detail::parse_int(tok[1], key));
        } else {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }

    // teacher widths chain stem -> block1 -> block2 -> ...
    int prev = rc.net.stem_width;
    for (BlockSpec& blk : rc.net.blocks) {
        blk.teacher_in_width = prev;
        prev = blk.teacher_out_width;
    }
    if (rc.val_fraction <= 0.0 || rc.val_fraction >= 1.0) throw ConfigError("val-fraction must lie in (0, 1)");
    rc.distill.seed = rc.net.seed;
    validate_config(rc.net);
    return rc;
}

// Canonical echo: fixed key order, normalized numbers. parse(echo(x)) == x,
// and the echo's bytes are the run identity below.
inline std::string run_config_to_text(const RunConfig& rc) {
    std::ostringstream os;
    os << "dataset " << rc.net.dataset << "\n";
    if (!rc.data_dir.empty()) os << "data-dir " << rc.data_dir << "\n";
    os << "seed " << rc.net.seed << "\n";
    os << "input-size " << rc.net.input_size << "\n";
    os << "input-channels " << rc.net.input_channels << "\n";
    os << "stem-width " << rc.net.stem_width << "\n";
    os << "classes " << rc.net.num_classes << "\n";
    for (const OpSpec& op : rc.net.ops)
        os << "op " << op.kernel << " " << op.expansion << " " << detail::fmt_double(op.se_ratio) << "\n";
    for (const BlockSpec& blk : rc.net.blocks)
        os << "block " << blk.stride << " " << blk.teacher_out_width << " " << detail::cells_to_string(blk.cells)
           << "\n";
    if (!rc.net.lambda.empty()) {
        os << "lambda";
        for (double v : rc.net.lambda) os << " " << detail::fmt_double(v);
        os << "\n";
    }
    os << "images-per-class " << rc.images_per_class << "\n";
    os << "noise " << detail::fmt_double(rc.noise) << "\n";
    os << "val-fraction " << detail::fmt_double(rc.val_fraction) << "\n";
    os << "teacher-epochs " << rc.teacher_epochs << "\n";
    os << "teacher-lr " << detail::fmt_double(rc.teacher_lr) << "\n";
    os << "accuracy-floor " << detail::fmt_double(rc.accuracy_floor) << "\n";
    os << "augment " << (rc.augment ? 1 : 0) << "\n";
    os << "epochs-per-cell " << rc.distill.epochs_per_cell << "\n";
    os << "batch-size " << rc.distill.batch_size << "\n";
    os << "lr-block1 " << detail::fmt_double(rc.distill.lr_block1) << "\n";
    os << "lr-rest " << detail::fmt_double(rc.distill.lr_rest) << "\n";
    os << "lr-decay " << detail::fmt_double(rc.distill.lr_decay) << "\n";
    os << "optimizer " << optim_rule_name(rc.distill.rule) << "\n";
    os << "strategy " << strategy_name(rc.distill.strategy) << "\n";
    os << "retrain-epochs " << rc.retrain_epochs << "\n";
    os << "retrain-lr " << detail::fmt_double(rc.retrain_lr) << "\n";
    os << "bench-archs " << rc.bench_archs << "\n";
    return os.str();
}

inline std::string config_hash(const RunConfig& rc) {
    const std::string canon = run_config_to_text(rc);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
    return buf;
}

inline RunConfig desk_run_config() {
    RunConfig rc;
    rc.net = desk_config();
    return rc;
}

}  // namespace bnas
