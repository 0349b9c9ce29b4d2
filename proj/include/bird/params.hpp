#pragma once

#include <map>
#include <string>
#include <vector>

#include "bird/optim.hpp"
#include "bird/rng.hpp"
#include "bird/tape.hpp"

namespace bird {

/// Binds a named parameter store to a tape for one forward/backward pass.
/// Leaves are created on first use; grads() maps node gradients back to
/// names, with zero entries for parameters the loss never touched.
class TapeParams {
 public:
  TapeParams(Tape& tape, const ParamMap& store) : tape_(tape), store_(store) {}

  Var operator[](const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto sit = store_.find(name);
    if (sit == store_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    Var v = tape_.leaf(sit->second, true);
    bound_.emplace(name, v);
    return v;
  }

  ParamMap grads(Var loss) const {
    std::vector<Var> vars;
    vars.reserve(bound_.size());
    for (const auto& [name, v] : bound_) vars.push_back(v);
    GradientMap by_id = tape_.grad(loss, vars);
    ParamMap out;
    for (const auto& [name, v] : bound_) out[name] = std::move(by_id[v.id]);
    for (const auto& [name, value] : store_)
      if (!out.count(name)) out[name] = Array::zeros_like(value);
    return out;
  }

 private:
  Tape& tape_;
  const ParamMap& store_;
  std::map<std::string, Var> bound_;
};

// ---- dense layers ----

inline void init_linear(ParamMap& store, RngStream& rng, const std::string& prefix,
                        std::size_t in, std::size_t out) {
  double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  store[prefix + "/w"] = rng.uniform_array(in, out, -limit, limit);
  store[prefix + "/b"] = Array::zeros(out);
}

inline void init_linear_zero(ParamMap& store, const std::string& prefix, std::size_t in,
                             std::size_t out) {
  store[prefix + "/w"] = Array::zeros(in, out);
  store[prefix + "/b"] = Array::zeros(out);
}

/// x [N,in] -> x W + b, [N,out].
inline Var linear(Tape& t, TapeParams& p, const std::string& prefix, Var x) {
  return t.add(t.matmul(x, p[prefix + "/w"]), p[prefix + "/b"]);
}

/// Three linear layers, ELU on the two hidden ones.
inline void init_mlp3(ParamMap& store, RngStream& rng, const std::string& prefix, std::size_t in,
                      std::size_t hidden, std::size_t out) {
  init_linear(store, rng, prefix + "/l0", in, hidden);
  init_linear(store, rng, prefix + "/l1", hidden, hidden);
  init_linear(store, rng, prefix + "/l2", hidden, out);
}

inline Var mlp3(Tape& t, TapeParams& p, const std::string& prefix, Var x) {
  Var h0 = t.elu(linear(t, p, prefix + "/l0", x));
  Var h1 = t.elu(linear(t, p, prefix + "/l1", h0));
  return linear(t, p, prefix + "/l2", h1);
}

// ---- gated recurrent cell ----

inline void init_gru(ParamMap& store, RngStream& rng, const std::string& prefix, std::size_t in,
                     std::size_t hidden) {
  init_linear(store, rng, prefix + "/x", in, 3 * hidden);  // bias lives on the input side
  double limit = std::sqrt(6.0 / static_cast<double>(2 * hidden));
  store[prefix + "/h/w"] = rng.uniform_array(hidden, 3 * hidden, -limit, limit);
}

/// Update/reset-gated recurrent step: x [N,in], h [N,H] -> h' [N,H].
inline Var gru_step(Tape& t, TapeParams& p, const std::string& prefix, Var x, Var h,
                    std::size_t hidden) {
  Var xg = linear(t, p, prefix + "/x", x);
  Var hg = t.matmul(h, p[prefix + "/h/w"]);
  Var update = t.sigmoid(t.add(t.slice_cols(xg, 0, hidden), t.slice_cols(hg, 0, hidden)));
  Var reset = t.sigmoid(t.add(t.slice_cols(xg, hidden, hidden), t.slice_cols(hg, hidden, hidden)));
  Var cand = t.tanh(t.add(t.slice_cols(xg, 2 * hidden, hidden),
                          t.mul(reset, t.slice_cols(hg, 2 * hidden, hidden))));
  Var one_minus_z = t.shift(t.negate(update), 1.0);
  return t.add(t.mul(one_minus_z, cand), t.mul(update, h));
}

/// softplus(raw) + floor, used for every standard-deviation head.
inline Var std_from_raw(Tape& t, Var raw, double floor) { return t.shift(t.softplus(raw), floor); }

}  // namespace bird
