#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bnas/errors.hpp"
#include "bnas/rng.hpp"
#include "bnas/tensor.hpp"

namespace bnas {

// Checkpoint container: UTF-8 header mapping name -> (dtype, shape, byte
// offset), then raw little-endian IEEE-754 payloads in header order.
//
//   bnas-checkpoint 1
//   tensor <name> <f32|f64> <rank> <d0> ... <offset> <nbytes>
//   end
//   <payload bytes>
//
// Offsets are relative to the end of the header line "end\n".
struct Container {
    // Ordered by insertion so payload order is stable.
    std::vector<std::pair<std::string, std::variant<TensorF, TensorD>>> entries;

    void put(const std::string& name, TensorF t) { entries.emplace_back(name, std::move(t)); }
    void put(const std::string& name, TensorD t) { entries.emplace_back(name, std::move(t)); }

    bool has(const std::string& name) const {
        for (const auto& [k, v] : entries)
            if (k == name) return true;
        return false;
    }

    const TensorF& get_f32(const std::string& name) const {
        for (const auto& [k, v] : entries)
            if (k == name) {
                if (const auto* t = std::get_if<TensorF>(&v)) return *t;
                throw DataError("container entry '" + name + "' is not f32");
            }
        throw DataError("container has no entry '" + name + "'");
    }

    const TensorD& get_f64(const std::string& name) const {
        for (const auto& [k, v] : entries)
            if (k == name) {
                if (const auto* t = std::get_if<TensorD>(&v)) return *t;
                throw DataError("container entry '" + name + "' is not f64");
            }
        throw DataError("container has no entry '" + name + "'");
    }
};

namespace detail {
static_assert(sizeof(float) == 4 && sizeof(double) == 8, "IEEE-754 sizes expected");

template <typename T>
void append_payload(std::string& out, const Tensor<T>& t) {
    const size_t bytes = t.data.size() * sizeof(T);
    const size_t pos = out.size();
    out.resize(pos + bytes);
    std::memcpy(out.data() + pos, t.data.data(), bytes);
}
}  // namespace detail

inline std::string container_to_bytes(const Container& c) {
    std::ostringstream header;
    std::string payload;
    header << "bnas-checkpoint 1\n";
    for (const auto& [name, var] : c.entries) {
        const bool is32 = std::holds_alternative<TensorF>(var);
        const Shape& shape = is32 ? std::get<TensorF>(var).shape : std::get<TensorD>(var).shape;
        const size_t offset = payload.size();
        size_t nbytes = 0;
        if (is32) {
            nbytes = std::get<TensorF>(var).data.size() * 4;
            detail::append_payload(payload, std::get<TensorF>(var));
        } else {
            nbytes = std::get<TensorD>(var).data.size() * 8;
            detail::append_payload(payload, std::get<TensorD>(var));
        }
        header << "tensor " << name << " " << (is32 ? "f32" : "f64") << " " << shape.size();
        for (int64_t d : shape) header << " " << d;
        header << " " << offset << " " << nbytes << "\n";
    }
    header << "end\n";
    return header.str() + payload;
}

inline Container container_from_bytes(const std::string& bytes) {
    Container c;
    size_t pos = 0;
    auto next_line = [&]() -> std::string {
        size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw DataError("truncated container header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (next_line() != "bnas-checkpoint 1") throw DataError("bad container magic");
    struct Rec {
        std::string name, dtype;
        Shape shape;
        size_t offset = 0, nbytes = 0;
    };
    std::vector<Rec> recs;
    for (;;) {
        std::string line = next_line();
        if (line == "end") break;
        std::istringstream is(line);
        std::string kw;
        Rec r;
        size_t rank = 0;
        is >> kw >> r.name >> r.dtype >> rank;
        if (!is || kw != "tensor") throw DataError("bad container header line: " + line);
        r.shape.resize(rank);
        for (size_t i = 0; i < rank; ++i) is >> r.shape[i];
        is >> r.offset >> r.nbytes;
        if (!is) throw DataError("bad container header line: " + line);
        recs.push_back(std::move(r));
    }
    const size_t payload_start = pos;
    for (const auto& r : recs) {
        if (payload_start + r.offset + r.nbytes > bytes.size())
            throw DataError("container payload truncated for '" + r.name + "'");
        const char* src = bytes.data() + payload_start + r.offset;
        if (r.dtype == "f32") {
            TensorF t(r.shape);
            if (r.nbytes != t.data.size() * 4) throw DataError("payload size mismatch for '" + r.name + "'");
            std::memcpy(t.data.data(), src, r.nbytes);
            c.put(r.name, std::move(t));
        } else if (r.dtype == "f64") {
            TensorD t(r.shape);
            if (r.nbytes != t.data.size() * 8) throw DataError("payload size mismatch for '" + r.name + "'");
            std::memcpy(t.data.data(), src, r.nbytes);
            c.put(r.name, std::move(t));
        } else {
            throw DataError("unknown dtype '" + r.dtype + "' in container");
        }
    }
    return c;
}

// Write-once artifacts go through a temp file and an atomic rename so
// concurrent readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot open for write: " + tmp.string());
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void save_container(const Container& c, const std::filesystem::path& path) {
    write_file_atomic(path, container_to_bytes(c));
}

inline Container load_container(const std::filesystem::path& path) {
    return container_from_bytes(read_file(path));
}

inline std::string file_fingerprint(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

}  // namespace bnas
