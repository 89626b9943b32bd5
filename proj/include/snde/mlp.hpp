#pragma once

// ReLU multilayer perceptrons over a flat parameter vector.
// Layout per layer: W (out x in, row-major) followed by b (out).

#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "snde/tape.hpp"

namespace snde {

struct MlpParams {
    std::vector<double> flat;
    std::vector<std::pair<int, int>> shapes;  ///< (in, out) per layer

    int input_dim() const { return shapes.front().first; }
    int output_dim() const { return shapes.back().second; }

    static std::size_t flat_size(const std::vector<std::pair<int, int>>& shapes) {
        std::size_t s = 0;
        for (auto [in, out] : shapes) s += static_cast<std::size_t>(in) * out + out;
        return s;
    }
    /// Offsets of (W, b) for layer l within the flat vector.
    std::pair<int, int> layer_offsets(int l) const {
        int off = 0;
        for (int k = 0; k < l; ++k) off += shapes[k].first * shapes[k].second + shapes[k].second;
        return {off, off + shapes[l].first * shapes[l].second};
    }
};

/// Glorot-uniform weights, zero biases, deterministic per seed.
inline MlpParams mlp_init(std::vector<std::pair<int, int>> shapes, std::uint64_t seed) {
    for (std::size_t l = 0; l + 1 < shapes.size(); ++l)
        if (shapes[l].second != shapes[l + 1].first)
            throw std::invalid_argument("mlp_init: layer shapes are not chain-compatible");
    MlpParams p;
    p.shapes = std::move(shapes);
    p.flat.assign(MlpParams::flat_size(p.shapes), 0.0);
    std::mt19937_64 rng(seed);
    int off = 0;
    for (auto [in, out] : p.shapes) {
        double bound = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (int i = 0; i < in * out; ++i) p.flat[off + i] = dist(rng);
        off += in * out + out;  // biases stay zero
    }
    return p;
}

/// Affine/ReLU chain with identity output layer.
inline std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x) {
    if (static_cast<int>(x.size()) != p.input_dim())
        throw std::invalid_argument("mlp_forward: input width mismatch");
    std::vector<double> cur(x.begin(), x.end()), next;
    for (std::size_t l = 0; l < p.shapes.size(); ++l) {
        auto [in, out] = p.shapes[l];
        auto [w_off, b_off] = p.layer_offsets(static_cast<int>(l));
        next.assign(out, 0.0);
        for (int i = 0; i < out; ++i) {
            double s = p.flat[b_off + i];
            for (int j = 0; j < in; ++j) s += p.flat[w_off + i * in + j] * cur[j];
            next[i] = s;
        }
        if (l + 1 < p.shapes.size())
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        cur.swap(next);
    }
    return cur;
}

/// Same chain recorded on a tape. The tape's parameter vector must be
/// the MLP's flat vector; param_base offsets into it.
inline int mlp_taped(Tape& tape, const MlpParams& p, int x, int param_base = 0) {
    int cur = x;
    for (std::size_t l = 0; l < p.shapes.size(); ++l) {
        auto [in, out] = p.shapes[l];
        auto [w_off, b_off] = p.layer_offsets(static_cast<int>(l));
        cur = tape.affine(cur, param_base + w_off, param_base + b_off, in, out);
        if (l + 1 < p.shapes.size()) cur = tape.relu(cur);
    }
    return cur;
}

}  // namespace snde
