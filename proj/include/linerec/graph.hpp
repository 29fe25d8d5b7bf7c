#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "linerec/tensor.hpp"

namespace linerec {

// Raised when training hits non-finite numbers; the CLI maps it to its own
// exit code.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Value {
  int id = -1;
  bool valid() const { return id != -1; }
};

// Reverse-mode tape. Parameters are registered once and survive
// reset_tape(); everything else is rebuilt per forward pass. Nodes are stored
// in creation order, which is a valid topological order by construction.
// Parameter handles have negative ids so they stay valid across tape resets.
class Graph {
 public:
  struct Node {
    const char* kind;
    Tensor t;
    std::function<void(Graph&)> back;  // empty for leaves
    bool needs_grad = false;
  };

  Value param(const std::string& name, Tensor init) {
    if (param_index_.count(name))
      throw std::invalid_argument("Graph::param: duplicate parameter " + name);
    Node n{"param", std::move(init), nullptr, true};
    n.t.alloc_grad();
    params_.push_back(std::move(n));
    param_names_.push_back(name);
    param_index_[name] = static_cast<int>(params_.size()) - 1;
    return Value{-static_cast<int>(params_.size()) - 1};
  }

  // Tape leaf carrying data; not differentiated.
  Value input(Tensor t) { return push({"input", std::move(t), nullptr, false}); }

  // Tape leaf that participates in backward (used by tests and loss probes).
  Value leaf(Tensor t, bool grad) { return push({"leaf", std::move(t), nullptr, grad}); }

  Value push(Node n) {
    if (n.needs_grad) n.t.alloc_grad();
    bump(n.kind);
    tape_.push_back(std::move(n));
    return Value{static_cast<int>(tape_.size()) - 1};
  }

  Node& node(Value v) {
    return v.id < -1 ? params_[static_cast<size_t>(-v.id - 2)] : tape_[static_cast<size_t>(v.id)];
  }
  const Node& node(Value v) const {
    return v.id < -1 ? params_[static_cast<size_t>(-v.id - 2)] : tape_[static_cast<size_t>(v.id)];
  }
  Tensor& tensor(Value v) { return node(v).t; }
  const Tensor& tensor(Value v) const { return node(v).t; }
  bool needs_grad(Value v) const { return node(v).needs_grad; }

  size_t n_params() const { return params_.size(); }
  const std::vector<std::string>& param_names() const { return param_names_; }
  Value param_value(const std::string& name) const {
    auto it = param_index_.find(name);
    if (it == param_index_.end())
      throw std::invalid_argument("Graph: unknown parameter " + name);
    return Value{-it->second - 2};
  }
  Tensor& param_at(size_t i) { return params_[i].t; }
  const Tensor& param_at(size_t i) const { return params_[i].t; }

  void reset_tape() { tape_.clear(); }
  size_t tape_size() const { return tape_.size(); }

  void zero_grad() {
    for (auto& p : params_) p.t.zero_grad();
  }

  // Propagates from a scalar loss back through the tape. Parameter gradients
  // accumulate across calls until sgd_step or zero_grad clears them.
  void backward(Value loss, double seed = 1.0) {
    Tensor& lt = tensor(loss);
    if (lt.size() != 1) throw std::invalid_argument("Graph::backward: loss must be scalar");
    if (loss.id < 0) return;  // loss is a bare parameter: nothing upstream
    lt.alloc_grad();
    lt.g[0] += seed;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = tape_[static_cast<size_t>(i)];
      if (n.needs_grad && n.back) n.back(*this);
    }
  }

  // Plain SGD: p -= lr * grad, then grads cleared. Refuses to apply a step in
  // which any gradient is non-finite; nothing is updated in that case.
  void sgd_step(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
      for (double gv : params_[i].t.g)
        if (!std::isfinite(gv))
          throw NumericError("sgd_step: non-finite gradient in parameter " + param_names_[i]);
    }
    for (auto& p : params_) {
      for (size_t k = 0; k < p.t.v.size(); ++k) p.t.v[k] -= lr * p.t.g[k];
      p.t.zero_grad();
    }
  }

  // kind -> number of nodes created since construction
  const std::map<std::string, long>& op_counts() const { return op_counts_; }

 private:
  void bump(const char* kind) { ++op_counts_[kind]; }

  std::vector<Node> params_;
  std::vector<std::string> param_names_;
  std::unordered_map<std::string, int> param_index_;
  std::vector<Node> tape_;
  std::map<std::string, long> op_counts_;
};

// Compares reverse-mode parameter gradients against central finite
// differences. `build` reconstructs the forward pass and returns the scalar
// loss; it is re-run twice per parameter scalar. Returns the max relative
// error, 0 for a parameter-free graph.
inline double grad_check(Graph& g, const std::function<Value(Graph&)>& build, double eps = 1e-5) {
  g.reset_tape();
  g.zero_grad();
  g.backward(build(g));

  std::vector<std::vector<double>> analytic(g.n_params());
  for (size_t i = 0; i < g.n_params(); ++i) analytic[i] = g.param_at(i).g;

  auto eval = [&]() {
    g.reset_tape();
    return g.tensor(build(g)).v[0];
  };

  double max_rel = 0.0;
  for (size_t pi = 0; pi < g.n_params(); ++pi) {
    Tensor& p = g.param_at(pi);
    for (size_t k = 0; k < p.v.size(); ++k) {
      const double orig = p.v[k];
      p.v[k] = orig + eps;
      const double fp = eval();
      p.v[k] = orig - eps;
      const double fm = eval();
      p.v[k] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = analytic[pi][k];
      const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-2});
      max_rel = std::max(max_rel, rel);
    }
  }
  g.reset_tape();
  g.zero_grad();
  return max_rel;
}

}  // namespace linerec
