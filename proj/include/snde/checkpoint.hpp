#pragma once

// Checkpoint files: text header (config as key=value lines, layer
// shapes), one parameter per line at 17 significant digits, loss
// history as a trailing CSV block. Round-trips bit-exactly.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "snde/training.hpp"

namespace snde {

inline std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::node: return "node";
        case ModelKind::so_node: return "so_node";
        case ModelKind::hybrid: return "hybrid";
    }
    throw std::logic_error("unreachable");
}

inline ModelKind model_kind_from(const std::string& s) {
    if (s == "node") return ModelKind::node;
    if (s == "so_node") return ModelKind::so_node;
    if (s == "hybrid") return ModelKind::hybrid;
    throw std::invalid_argument("unknown model kind: " + s);
}

namespace detail {

inline std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("malformed number for " + what + ": '" + s + "'");
    }
}

inline long long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("malformed integer for " + what + ": '" + s + "'");
    }
}

}  // namespace detail

inline void write_training_config(std::ostream& os, const TrainingConfig& c) {
    os << "system=" << c.system << "\n";
    os << "model=" << model_kind_name(c.model) << "\n";
    os << "gamma=" << detail::fmt17(c.gamma) << "\n";
    os << "hidden_layers=" << c.hidden_layers << "\n";
    os << "hidden_width=" << c.hidden_width << "\n";
    os << "epochs=" << c.epochs << "\n";
    os << "lr_max=" << detail::fmt17(c.lr_max) << "\n";
    os << "lr_min=" << detail::fmt17(c.lr_min) << "\n";
    os << "weight_decay=" << detail::fmt17(c.weight_decay) << "\n";
    os << "seed=" << c.seed << "\n";
    os << "abs_tol=" << detail::fmt17(c.abs_tol) << "\n";
    os << "rel_tol=" << detail::fmt17(c.rel_tol) << "\n";
    os << "n_trajectories=" << c.n_trajectories << "\n";
    os << "chunk_length=" << c.chunk_length << "\n";
    os << "stabilize_after_epoch=" << c.stabilize_after_epoch << "\n";
}

inline bool apply_training_key(TrainingConfig& c, const std::string& key,
                               const std::string& val) {
    using detail::parse_double;
    using detail::parse_int;
    if (key == "system") c.system = val;
    else if (key == "model") c.model = model_kind_from(val);
    else if (key == "gamma") c.gamma = parse_double(val, key);
    else if (key == "hidden_layers") c.hidden_layers = static_cast<int>(parse_int(val, key));
    else if (key == "hidden_width") c.hidden_width = static_cast<int>(parse_int(val, key));
    else if (key == "epochs") c.epochs = static_cast<int>(parse_int(val, key));
    else if (key == "lr_max") c.lr_max = parse_double(val, key);
    else if (key == "lr_min") c.lr_min = parse_double(val, key);
    else if (key == "weight_decay") c.weight_decay = parse_double(val, key);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(val, key));
    else if (key == "abs_tol") c.abs_tol = parse_double(val, key);
    else if (key == "rel_tol") c.rel_tol = parse_double(val, key);
    else if (key == "n_trajectories") c.n_trajectories = static_cast<int>(parse_int(val, key));
    else if (key == "chunk_length") c.chunk_length = static_cast<int>(parse_int(val, key));
    else if (key == "stabilize_after_epoch")
        c.stabilize_after_epoch = static_cast<int>(parse_int(val, key));
    else return false;
    return true;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os << "checkpoint v1\n";
    write_training_config(os, ck.config);
    os << "epoch=" << ck.epoch << "\n";
    os << "shapes=";
    for (std::size_t l = 0; l < ck.params.shapes.size(); ++l) {
        if (l) os << ",";
        os << ck.params.shapes[l].first << "x" << ck.params.shapes[l].second;
    }
    os << "\n";
    os << "params=" << ck.params.flat.size() << "\n";
    for (double w : ck.params.flat) os << detail::fmt17(w) << "\n";
    os << "loss_history\n";
    os << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < ck.train_loss.size(); ++e)
        os << e << "," << detail::fmt17(ck.train_loss[e]) << ","
           << detail::fmt17(ck.val_loss[e]) << "\n";
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "checkpoint v1")
        throw std::runtime_error(path + ": not a checkpoint file");
    Checkpoint ck;
    std::size_t n_params = 0;
    while (std::getline(is, line)) {
        if (line == "loss_history") break;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ": malformed header line '" + line + "'");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (apply_training_key(ck.config, key, val)) continue;
        if (key == "epoch") {
            ck.epoch = static_cast<int>(detail::parse_int(val, key));
        } else if (key == "shapes") {
            std::stringstream ss(val);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                auto x = tok.find('x');
                if (x == std::string::npos)
                    throw std::runtime_error(path + ": malformed shape '" + tok + "'");
                ck.params.shapes.push_back(
                    {static_cast<int>(detail::parse_int(tok.substr(0, x), "shape")),
                     static_cast<int>(detail::parse_int(tok.substr(x + 1), "shape"))});
            }
        } else if (key == "params") {
            n_params = static_cast<std::size_t>(detail::parse_int(val, key));
            ck.params.flat.reserve(n_params);
            for (std::size_t i = 0; i < n_params; ++i) {
                if (!std::getline(is, line))
                    throw std::runtime_error(path + ": truncated parameter block");
                ck.params.flat.push_back(detail::parse_double(line, "parameter"));
            }
        } else {
            throw std::runtime_error(path + ": unknown header key '" + key + "'");
        }
    }
    if (ck.params.flat.size() != MlpParams::flat_size(ck.params.shapes))
        throw std::runtime_error(path + ": parameter count inconsistent with shapes");
    std::getline(is, line);  // CSV header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string e, tr, va;
        if (!std::getline(ss, e, ',') || !std::getline(ss, tr, ',') || !std::getline(ss, va))
            throw std::runtime_error(path + ": malformed loss-history row '" + line + "'");
        ck.train_loss.push_back(detail::parse_double(tr, "train_loss"));
        ck.val_loss.push_back(detail::parse_double(va, "val_loss"));
    }
    return ck;
}

}  // namespace snde
