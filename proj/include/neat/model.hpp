#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "neat/common.hpp"
#include "neat/rng.hpp"

namespace neat {

// Reference architecture: a small pre-norm transformer with learned position
// embeddings and a GELU feed-forward of width 4d. Dimensions are fixed by the
// checkpoint header, so a loaded model always matches the file it came from.
struct ModelArch {
    std::int32_t vocab = 32;
    std::int32_t dim = 32;
    std::int32_t max_seq = 64;
    std::int32_t blocks = 2;
    std::int32_t heads = 2;

    std::int32_t head_dim() const { return dim / heads; }
    std::int32_t ffn_dim() const { return 4 * dim; }

    bool operator==(const ModelArch&) const = default;

    void validate() const {
        if (vocab < 4 || dim < 1 || max_seq < 2 || blocks < 1 || heads < 1)
            throw DomainError("model architecture out of range");
        if (dim % heads != 0) throw DomainError("dim must be divisible by heads");
    }
};

// Byte/flat-vector offsets of every tensor, in the canonical parameter order.
// The order is frozen: it defines both GradVector indexing and the checkpoint
// file layout.
struct ParamLayout {
    struct BlockOffsets {
        std::int64_t ln1_g, ln1_b;
        std::int64_t wq, bq, wk, bk, wv, bv, wo, bo;
        std::int64_t ln2_g, ln2_b;
        std::int64_t fc1_w, fc1_b, fc2_w, fc2_b;
    };

    std::int64_t tok_emb = 0;
    std::int64_t pos_emb = 0;
    std::vector<BlockOffsets> block;
    std::int64_t lnf_g = 0, lnf_b = 0;
    std::int64_t head_w = 0, head_b = 0;
    std::int64_t total = 0;

    explicit ParamLayout(const ModelArch& a) {
        const std::int64_t d = a.dim, v = a.vocab, f = a.ffn_dim();
        std::int64_t off = 0;
        auto take = [&off](std::int64_t n) {
            std::int64_t o = off;
            off += n;
            return o;
        };
        tok_emb = take(v * d);
        pos_emb = take(static_cast<std::int64_t>(a.max_seq) * d);
        block.resize(static_cast<std::size_t>(a.blocks));
        for (auto& b : block) {
            b.ln1_g = take(d);
            b.ln1_b = take(d);
            b.wq = take(d * d);
            b.bq = take(d);
            b.wk = take(d * d);
            b.bk = take(d);
            b.wv = take(d * d);
            b.bv = take(d);
            b.wo = take(d * d);
            b.bo = take(d);
            b.ln2_g = take(d);
            b.ln2_b = take(d);
            b.fc1_w = take(f * d);
            b.fc1_b = take(f);
            b.fc2_w = take(d * f);
            b.fc2_b = take(d);
        }
        lnf_g = take(d);
        lnf_b = take(d);
        head_w = take(v * d);
        head_b = take(v);
        total = off;
    }
};

// Full differentiable parameter set, stored flat in canonical order.
class ModelParams {
public:
    explicit ModelParams(const ModelArch& arch = ModelArch{})
        : arch_(arch), layout_(arch), w_(static_cast<std::size_t>(layout_.total), 0.0) {
        arch_.validate();
    }

    const ModelArch& arch() const { return arch_; }
    const ParamLayout& layout() const { return layout_; }

    double* data() { return w_.data(); }
    const double* data() const { return w_.data(); }
    std::int64_t size() const { return layout_.total; }

    std::vector<double>& flat() { return w_; }
    const std::vector<double>& flat() const { return w_; }

    double* at(std::int64_t off) { return w_.data() + off; }
    const double* at(std::int64_t off) const { return w_.data() + off; }

    void fill(double v) { std::fill(w_.begin(), w_.end(), v); }

    // Gaussian init, mean 0, std `std`, seeded.
    void init_gaussian(std::uint64_t seed, double std_dev = 0.02) {
        Rng rng(splitmix64(seed ^ 0x5eedc0defULL));
        for (double& x : w_) x = std_dev * rng.gaussian();
    }

    void check_finite(const char* what = "model parameters") const {
        for (std::size_t i = 0; i < w_.size(); ++i) {
            if (!std::isfinite(w_[i])) {
                throw NumericError(std::string(what) + ": non-finite entry at index " +
                                   std::to_string(i));
            }
        }
    }

    bool operator==(const ModelParams& o) const { return arch_ == o.arch_ && w_ == o.w_; }

private:
    ModelArch arch_;
    ParamLayout layout_;
    std::vector<double> w_;
};

// Gradient carrier: one real per parameter, same length and canonical order as
// the flattened ModelParams.
using GradVector = std::vector<double>;

inline GradVector make_grad(const ModelParams& p) {
    return GradVector(static_cast<std::size_t>(p.size()), 0.0);
}

// ----------------------------- checkpoint file -----------------------------
//
// Format: one ASCII header line, then the flat parameter array as little-endian
// 64-bit floats in canonical order.

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const ModelParams& p, const std::string& path) {
    p.check_finite("checkpoint save");
    const ModelArch& a = p.arch();
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open for write: " + tmp);
        char header[128];
        std::snprintf(header, sizeof(header), "NEATCKPT V=%d d=%d T=%d blocks=%d heads=%d version=%d\n",
                      a.vocab, a.dim, a.max_seq, a.blocks, a.heads, kCheckpointVersion);
        out << header;
        for (std::int64_t i = 0; i < p.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, p.data() + i, sizeof(bits));
            unsigned char bytes[8];
            for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
            out.write(reinterpret_cast<const char*>(bytes), 8);
        }
        if (!out) throw IoError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("rename failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string header;
    if (!std::getline(in, header)) throw ParseError("checkpoint header missing: " + path);
    ModelArch a;
    int version = -1;
    if (std::sscanf(header.c_str(), "NEATCKPT V=%d d=%d T=%d blocks=%d heads=%d version=%d",
                    &a.vocab, &a.dim, &a.max_seq, &a.blocks, &a.heads, &version) != 6) {
        throw ParseError("malformed checkpoint header: " + header);
    }
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    a.validate();
    ModelParams p(a);
    for (std::int64_t i = 0; i < p.size(); ++i) {
        unsigned char bytes[8];
        in.read(reinterpret_cast<char*>(bytes), 8);
        if (!in) throw ParseError("checkpoint truncated at parameter " + std::to_string(i));
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        std::memcpy(p.data() + i, &bits, sizeof(bits));
    }
    char extra;
    if (in.read(&extra, 1)) throw ParseError("trailing bytes after parameter array: " + path);
    p.check_finite("checkpoint load");
    return p;
}

}  // namespace neat
