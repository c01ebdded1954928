#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "bnas/errors.hpp"
#include "bnas/rng.hpp"
#include "bnas/tensor.hpp"

namespace bnas {

struct Dataset {
    TensorF images;  // [N, 3, S, S], normalized
    std::vector<int64_t> labels;
    std::string split = "train";

    int64_t size() const { return int64_t(labels.size()); }
};

struct SyntheticSpec {
    int class_count = 10;
    int images_per_class = 100;
    int size = 32;
    double noise = 0.5;  // additive Gaussian sigma on top of the class template
};

// Class-conditional fixture: each class owns a fixed low-frequency template
// (a seeded 4x4 grid, bilinearly upsampled), and every sample is template
// plus Gaussian noise. Bit-identical for a given (seed, spec).
inline Dataset gen_synthetic(uint64_t seed, const SyntheticSpec& spec) {
    const int S = spec.size;
    const int grid = 4;
    std::vector<TensorF> templates;
    templates.reserve(size_t(spec.class_count));
    for (int c = 0; c < spec.class_count; ++c) {
        Rng rng = Rng::derive(seed, "class-template", uint64_t(c));
        TensorF cell({1, 3, grid, grid});
        for (auto& v : cell.data) v = float(rng.normal());
        TensorF tpl({1, 3, S, S});
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    // bilinear sample of the coarse grid
                    const double gy = (double(y) + 0.5) / S * grid - 0.5;
                    const double gx = (double(x) + 0.5) / S * grid - 0.5;
                    const int y0 = std::clamp(int(std::floor(gy)), 0, grid - 1);
                    const int x0 = std::clamp(int(std::floor(gx)), 0, grid - 1);
                    const int y1 = std::min(y0 + 1, grid - 1);
                    const int x1 = std::min(x0 + 1, grid - 1);
                    const double fy = std::clamp(gy - y0, 0.0, 1.0);
                    const double fx = std::clamp(gx - x0, 0.0, 1.0);
                    const double v = (1 - fy) * ((1 - fx) * cell.at4(0, ch, y0, x0) + fx * cell.at4(0, ch, y0, x1)) +
                                     fy * ((1 - fx) * cell.at4(0, ch, y1, x0) + fx * cell.at4(0, ch, y1, x1));
                    tpl.at4(0, ch, y, x) = float(v);
                }
        templates.push_back(std::move(tpl));
    }

    const int64_t total = int64_t(spec.class_count) * spec.images_per_class;
    Dataset ds;
    ds.images = TensorF({total, 3, S, S});
    ds.labels.resize(size_t(total));
    int64_t idx = 0;
    for (int i = 0; i < spec.images_per_class; ++i) {
        for (int c = 0; c < spec.class_count; ++c, ++idx) {
            Rng rng = Rng::derive(seed, "sample", uint64_t(c), uint64_t(i));
            const TensorF& tpl = templates[size_t(c)];
            float* out = ds.images.ptr() + idx * 3 * S * S;
            for (int64_t k = 0; k < 3 * int64_t(S) * S; ++k)
                out[k] = tpl.data[size_t(k)] + float(spec.noise * rng.normal());
            ds.labels[size_t(idx)] = c;
        }
    }
    return ds;
}

// CIFAR-10 binary batches: 3073-byte records, byte 0 the label, then 3072
// pixel bytes channel-major (1024 R, 1024 G, 1024 B), row-major inside a
// channel. Pixels scale to [0,1] and are normalized with the usual CIFAR
// statistics: mean (0.4914, 0.4822, 0.4465), std (0.2470, 0.2435, 0.2616).
inline Dataset load_cifar10(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("cannot open dataset file '" + path + "'");
    f.seekg(0, std::ios::end);
    const int64_t bytes = f.tellg();
    f.seekg(0);
    constexpr int64_t rec = 3073;
    if (bytes <= 0 || bytes % rec != 0)
        throw DataError("dataset file '" + path + "' is " + std::to_string(bytes) +
                        " bytes, not a multiple of 3073");
    const int64_t n = bytes / rec;
    constexpr double mean[3] = {0.4914, 0.4822, 0.4465};
    constexpr double stdev[3] = {0.2470, 0.2435, 0.2616};
    Dataset ds;
    ds.images = TensorF({n, 3, 32, 32});
    ds.labels.resize(size_t(n));
    std::vector<unsigned char> buf(static_cast<size_t>(rec));
    for (int64_t i = 0; i < n; ++i) {
        f.read(reinterpret_cast<char*>(buf.data()), rec);
        if (!f) throw DataError("short read in '" + path + "'");
        if (buf[0] > 9) throw DataError("record " + std::to_string(i) + ": label byte " + std::to_string(buf[0]));
        ds.labels[size_t(i)] = buf[0];
        float* out = ds.images.ptr() + i * 3 * 32 * 32;
        for (int ch = 0; ch < 3; ++ch)
            for (int64_t k = 0; k < 1024; ++k)
                out[ch * 1024 + k] =
                    float((double(buf[size_t(1 + ch * 1024 + k)]) / 255.0 - mean[ch]) / stdev[ch]);
    }
    return ds;
}

// Deterministic holdout: a seeded permutation sends `fraction` of the rows
// to the second dataset.
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction, uint64_t seed,
                                                 const std::string& tag_kept = "train",
                                                 const std::string& tag_held = "val") {
    const int64_t n = ds.size();
    const int64_t held = int64_t(double(n) * fraction);
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = Rng::derive(seed, "holdout");
    for (int64_t i = n - 1; i > 0; --i) std::swap(perm[size_t(i)], perm[size_t(rng.uniform_int(uint64_t(i + 1)))]);

    const int64_t px = ds.images.numel() / n;
    auto take = [&](int64_t lo, int64_t hi, const std::string& tag) {
        Dataset out;
        out.split = tag;
        out.images = TensorF({hi - lo, ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]});
        out.labels.resize(size_t(hi - lo));
        std::vector<int64_t> rows(perm.begin() + lo, perm.begin() + hi);
        std::sort(rows.begin(), rows.end());  // keep original order inside a split
        for (int64_t i = 0; i < hi - lo; ++i) {
            std::copy_n(ds.images.ptr() + rows[size_t(i)] * px, px, out.images.ptr() + i * px);
            out.labels[size_t(i)] = ds.labels[size_t(rows[size_t(i)])];
        }
        return out;
    };
    return {take(held, n, tag_kept), take(0, held, tag_held)};
}

inline TensorF image_batch(const Dataset& ds, int64_t start, int64_t count) {
    const int64_t px = ds.images.numel() / ds.size();
    TensorF out({count, ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]});
    std::copy_n(ds.images.ptr() + start * px, count * px, out.ptr());
    return out;
}

inline TensorF label_batch(const Dataset& ds, int64_t start, int64_t count) {
    TensorF out({count});
    for (int64_t i = 0; i < count; ++i) out.data[size_t(i)] = float(ds.labels[size_t(start + i)]);
    return out;
}

// Horizontal flip (p=0.5) and 2px-pad random crop, per image. Off by
// default everywhere; deterministic under the caller's rng.
inline void augment_batch(TensorF& images, Rng& rng) {
    const int64_t N = images.shape[0], C = images.shape[1], H = images.shape[2], W = images.shape[3];
    constexpr int pad = 2;
    std::vector<float> tmp;
    for (int64_t n = 0; n < N; ++n) {
        const bool flip = rng.uniform() < 0.5;
        const int dy = int(rng.uniform_int(2 * pad + 1)) - pad;
        const int dx = int(rng.uniform_int(2 * pad + 1)) - pad;
        tmp.assign(size_t(C * H * W), 0.f);
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x) {
                    const int64_t sy = y + dy;
                    const int64_t sx = (flip ? W - 1 - x : x) + dx;
                    if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                    tmp[size_t((c * H + y) * W + x)] = images.at4(n, c, sy, sx);
                }
        std::copy(tmp.begin(), tmp.end(), images.ptr() + n * C * H * W);
    }
}

}  // namespace bnas
