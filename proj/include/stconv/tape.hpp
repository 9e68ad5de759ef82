#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stconv/errors.hpp"
#include "stconv/ndarray.hpp"

namespace stconv {

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so the
// recording order is already a topological order and backward() is a single
// reverse sweep.
//
// Parameter nodes alias an external NdArray: their gradient buffer is the
// array's own grad(), so repeated backward passes accumulate into it.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var)>;

  Tape() = default;
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(NdArray<T> value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var parameter(NdArray<T>& param) {
    Node n;
    n.external = &param;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var record(NdArray<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  Var record(NdArray<T> value, std::span<const Var> inputs, BackwardFn fn) {
    Node n;
    n.owned = std::move(value);
    if (grad_enabled_) {
      for (auto v : inputs) {
        if (node(v).requires_grad) {
          n.requires_grad = true;
          break;
        }
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const NdArray<T>& value(Var v) const {
    const Node& n = node(v);
    return n.external ? *n.external : n.owned;
  }

  const Shape& shape(Var v) const { return value(v).shape(); }

  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient buffer for v, allocated zero-filled on first use.
  std::span<T> grad(Var v) {
    Node& n = node(v);
    if (n.external) return n.external->grad();
    if (n.grad.empty()) n.grad.assign(n.owned.size(), T{0});
    return n.grad;
  }

  bool has_grad(Var v) const {
    const Node& n = node(v);
    return n.external ? n.external->has_grad() : !n.grad.empty();
  }

  void backward(Var loss) {
    if (value(loss).size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(shape(loss)));
    }
    if (!grad_enabled_) throw ContractError("backward: tape was recorded without gradients");
    grad(loss)[0] += T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward) continue;
      if (n.grad.empty()) continue;  // no gradient reached this node
      n.backward(*this, Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    NdArray<T> owned;
    NdArray<T>* external = nullptr;
    std::vector<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw ContractError("Tape: unknown node " + std::to_string(v.id));
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("Tape: unknown node " + std::to_string(v.id));
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace stconv
