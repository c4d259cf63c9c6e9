#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lo/errors.hpp"

namespace lo {

// Dense row-major tensor. T = float is the training precision, T = double
// the verification precision for finite-difference checks.
template <typename T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> data;

  static Tensor zeros(std::vector<std::int64_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(numel_of(t.shape)), T(0));
    return t;
  }
  static Tensor full(std::vector<std::int64_t> s, T v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor{{1}, {v}}; }
  static Tensor vec(std::vector<T> vals) {
    const std::int64_t n = static_cast<std::int64_t>(vals.size());
    return Tensor{{n}, std::move(vals)};
  }
  static Tensor row(std::vector<T> vals) {
    const std::int64_t n = static_cast<std::int64_t>(vals.size());
    return Tensor{{1, n}, std::move(vals)};
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) n *= d;
    return n;
  }
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T& operator()(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * cols() + c)];
  }
  T operator()(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * cols() + c)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <typename T>
std::string shape_str(const Tensor<T>& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

enum class Mode { Train, Infer };

// Reverse-mode tape. Every op appends one node holding the forward value
// and, when any input requires gradients, a closure that scatters the
// node's gradient back to its inputs. backward() replays the closures in
// exact reverse execution order.
template <typename T>
class Tape {
 public:
  using Id = std::int32_t;

  Id input(Tensor<T> value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr, "input");
  }

  const Tensor<T>& value(Id id) const { return nodes_[idx(id)].value; }
  const Tensor<T>& grad(Id id) const { return nodes_[idx(id)].grad; }
  bool requires_grad(Id id) const { return nodes_[idx(id)].requires_grad; }

  // ---- primitive ops ----

  // y = x * w + bias, x:[R,a], w:[a,b], bias:[b].
  Id linear(Id x, Id w, Id bias) {
    const Tensor<T>&xv = value(x), &wv = value(w), &bv = value(bias);
    if (xv.shape.size() != 2 || wv.shape.size() != 2 || bv.shape.size() != 1 ||
        xv.shape[1] != wv.shape[0] || wv.shape[1] != bv.shape[0]) {
      throw ShapeMismatch("linear " + shape_str(xv) + " x " + shape_str(wv) +
                          " + " + shape_str(bv));
    }
    Tensor<T> y = Tensor<T>::zeros({xv.shape[0], wv.shape[1]});
    cmat(y) = cmap(xv) * cmap(wv);
    cmat(y).rowwise() += cvec(bv).transpose();

    auto bw = [this, x, w, bias](const Tensor<T>& gy) {
      const Tensor<T>&xv2 = value(x), &wv2 = value(w);
      if (requires_grad(x)) gmat(x) += cmap(gy) * cmap(wv2).transpose();
      if (requires_grad(w)) gmat(w) += cmap(xv2).transpose() * cmap(gy);
      if (requires_grad(bias)) gvec(bias) += cmap(gy).colwise().sum().transpose();
    };
    return push(std::move(y), any_grad({x, w, bias}), bw, "linear");
  }

  Id relu(Id x) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    auto bw = [this, x](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      const Tensor<T>& xv = value(x);
      Tensor<T>& gx = mutable_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i)
        if (xv.data[i] > T(0)) gx.data[i] += gy.data[i];
    };
    return push(std::move(y), any_grad({x}), bw, "relu");
  }

  // Batch normalization over the row extent of x:[N,C]. Train mode uses
  // batch statistics (biased variance, eps = 1e-5) and, when update
  // pointers are given, folds them into the running stats with momentum
  // 0.9. Infer mode normalizes with the supplied running stats; the head
  // layer passes frozen unit stats through this path in both modes.
  Id batch_norm(Id x, Id gamma, Id beta, Mode mode,
                const Tensor<T>* running_mean, const Tensor<T>* running_var,
                Tensor<T>* update_mean = nullptr,
                Tensor<T>* update_var = nullptr) {
    const Tensor<T>&xv = value(x), &gv = value(gamma), &bv = value(beta);
    if (xv.shape.size() != 2 || gv.shape.size() != 1 || bv.shape.size() != 1 ||
        gv.shape[0] != xv.shape[1] || bv.shape[0] != xv.shape[1]) {
      throw ShapeMismatch("batch_norm " + shape_str(xv) + " with " +
                          shape_str(gv) + "/" + shape_str(bv));
    }
    const std::int64_t N = xv.shape[0], C = xv.shape[1];
    const T eps = T(1e-5);

    Tensor<T> mean, var;
    if (mode == Mode::Train) {
      if (N < 2)
        throw DegenerateBatch("batch_norm train mode needs N >= 2, got " +
                              std::to_string(N));
      mean = Tensor<T>::zeros({C});
      var = Tensor<T>::zeros({C});
      for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t c = 0; c < C; ++c) mean.data[c] += xv(i, c);
      for (std::int64_t c = 0; c < C; ++c) mean.data[c] /= T(N);
      for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t c = 0; c < C; ++c) {
          const T d = xv(i, c) - mean.data[c];
          var.data[c] += d * d;
        }
      for (std::int64_t c = 0; c < C; ++c) var.data[c] /= T(N);
      if (update_mean != nullptr && update_var != nullptr) {
        for (std::int64_t c = 0; c < C; ++c) {
          update_mean->data[c] = T(0.9) * update_mean->data[c] + T(0.1) * mean.data[c];
          update_var->data[c] = T(0.9) * update_var->data[c] + T(0.1) * var.data[c];
        }
      }
    } else {
      if (running_mean == nullptr || running_var == nullptr)
        throw InvalidConfig("batch_norm infer mode needs running stats");
      mean = *running_mean;
      var = *running_var;
    }

    Tensor<T> inv_std = Tensor<T>::zeros({C});
    for (std::int64_t c = 0; c < C; ++c)
      inv_std.data[c] = T(1) / std::sqrt(var.data[c] + eps);

    Tensor<T> xhat = Tensor<T>::zeros({N, C});
    Tensor<T> y = Tensor<T>::zeros({N, C});
    for (std::int64_t i = 0; i < N; ++i)
      for (std::int64_t c = 0; c < C; ++c) {
        xhat(i, c) = (xv(i, c) - mean.data[c]) * inv_std.data[c];
        y(i, c) = gv.data[c] * xhat(i, c) + bv.data[c];
      }

    const bool through_stats = (mode == Mode::Train);
    auto bw = [this, x, gamma, beta, xhat, inv_std, N, C,
               through_stats](const Tensor<T>& gy) {
      const Tensor<T>& gv2 = value(gamma);
      if (requires_grad(gamma)) {
        Tensor<T>& gg = mutable_grad(gamma);
        for (std::int64_t i = 0; i < N; ++i)
          for (std::int64_t c = 0; c < C; ++c)
            gg.data[c] += gy(i, c) * xhat(i, c);
      }
      if (requires_grad(beta)) {
        Tensor<T>& gb = mutable_grad(beta);
        for (std::int64_t i = 0; i < N; ++i)
          for (std::int64_t c = 0; c < C; ++c) gb.data[c] += gy(i, c);
      }
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      if (!through_stats) {
        for (std::int64_t i = 0; i < N; ++i)
          for (std::int64_t c = 0; c < C; ++c)
            gx(i, c) += gy(i, c) * gv2.data[c] * inv_std.data[c];
        return;
      }
      // Through the batch statistics:
      //   dx = (g/std) * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
      // with dxhat = gy * gamma and means over the batch extent.
      for (std::int64_t c = 0; c < C; ++c) {
        T sum_d = T(0), sum_dx = T(0);
        for (std::int64_t i = 0; i < N; ++i) {
          const T d = gy(i, c) * gv2.data[c];
          sum_d += d;
          sum_dx += d * xhat(i, c);
        }
        const T mean_d = sum_d / T(N);
        const T mean_dx = sum_dx / T(N);
        for (std::int64_t i = 0; i < N; ++i) {
          const T d = gy(i, c) * gv2.data[c];
          gx(i, c) += inv_std.data[c] * (d - mean_d - xhat(i, c) * mean_dx);
        }
      }
    };
    return push(std::move(y), any_grad({x, gamma, beta}), bw, "batch_norm");
  }

  // Channelwise max over row segments of x:[R,C]; segment s covers rows
  // [start_s, start_s + len_s). Gradient routes to the first argmax row.
  Id max_pool_segments(Id x, std::vector<std::pair<std::int64_t, std::int64_t>> segments) {
    const Tensor<T>& xv = value(x);
    if (xv.shape.size() != 2)
      throw ShapeMismatch("max_pool_segments needs a 2-D input, got " +
                          shape_str(xv));
    const std::int64_t C = xv.shape[1];
    const std::int64_t S = static_cast<std::int64_t>(segments.size());
    for (const auto& [start, len] : segments) {
      if (len < 1 || start < 0 || start + len > xv.shape[0])
        throw InvalidConfig("max_pool segment out of range");
    }
    Tensor<T> y = Tensor<T>::zeros({S, C});
    std::vector<std::int64_t> arg(static_cast<std::size_t>(S * C));
    for (std::int64_t s = 0; s < S; ++s) {
      const auto [start, len] = segments[static_cast<std::size_t>(s)];
      for (std::int64_t c = 0; c < C; ++c) {
        T best = xv(start, c);
        std::int64_t best_i = start;
        for (std::int64_t i = start + 1; i < start + len; ++i) {
          if (xv(i, c) > best) {
            best = xv(i, c);
            best_i = i;
          }
        }
        y(s, c) = best;
        arg[static_cast<std::size_t>(s * C + c)] = best_i;
      }
    }
    auto bw = [this, x, arg, C](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      const std::int64_t S = gy.shape[0];
      for (std::int64_t s = 0; s < S; ++s)
        for (std::int64_t c = 0; c < C; ++c)
          gx(arg[static_cast<std::size_t>(s * C + c)], c) += gy(s, c);
    };
    return push(std::move(y), any_grad({x}), bw, "max_pool_segments");
  }

  // x:[N,K,C] with per-row valid prefix lengths; channelwise max over the
  // valid entries. Row-major [N,K,C] is bitwise a [N*K,C] matrix, so this
  // wraps the segment kernel over that view.
  Id max_pool_set(Id x, const std::vector<std::int64_t>& valid_counts) {
    const Tensor<T>& xv = value(x);
    if (xv.shape.size() != 3)
      throw ShapeMismatch("max_pool_set needs a 3-D input, got " + shape_str(xv));
    const std::int64_t N = xv.shape[0], K = xv.shape[1], C = xv.shape[2];
    if (static_cast<std::int64_t>(valid_counts.size()) != N)
      throw ShapeMismatch("valid_counts length != N");
    std::vector<std::pair<std::int64_t, std::int64_t>> segments;
    segments.reserve(valid_counts.size());
    for (std::int64_t i = 0; i < N; ++i) {
      const std::int64_t k = valid_counts[static_cast<std::size_t>(i)];
      if (k < 1 || k > K) throw InvalidConfig("valid_count out of [1, K]");
      segments.emplace_back(i * K, k);
    }
    const Id flat = reshape(x, {N * K, C});
    return max_pool_segments(flat, std::move(segments));
  }

  // Metadata-only reshape; the flat buffer is shared layout-wise.
  Id reshape(Id x, std::vector<std::int64_t> new_shape) {
    const Tensor<T>& xv = value(x);
    if (Tensor<T>::numel_of(new_shape) != xv.numel())
      throw ShapeMismatch("reshape numel mismatch");
    Tensor<T> y;
    y.shape = std::move(new_shape);
    y.data = xv.data;
    auto bw = [this, x](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i) gx.data[i] += gy.data[i];
    };
    return push(std::move(y), any_grad({x}), bw, "reshape");
  }

  // Row gather; backward scatter-adds, so repeated indices accumulate.
  Id gather_rows(Id x, std::vector<std::int64_t> indices) {
    const Tensor<T>& xv = value(x);
    if (xv.shape.size() != 2)
      throw ShapeMismatch("gather_rows needs a 2-D input, got " + shape_str(xv));
    const std::int64_t C = xv.shape[1];
    for (std::int64_t i : indices)
      if (i < 0 || i >= xv.shape[0]) throw InvalidConfig("gather index out of range");
    const std::int64_t R = static_cast<std::int64_t>(indices.size());
    Tensor<T> y = Tensor<T>::zeros({R, C});
    for (std::int64_t r = 0; r < R; ++r)
      for (std::int64_t c = 0; c < C; ++c)
        y(r, c) = xv(indices[static_cast<std::size_t>(r)], c);
    auto bw = [this, x, indices, C](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      for (std::size_t r = 0; r < indices.size(); ++r)
        for (std::int64_t c = 0; c < C; ++c)
          gx(indices[r], c) += gy(static_cast<std::int64_t>(r), c);
    };
    return push(std::move(y), any_grad({x}), bw, "gather_rows");
  }

  Id concat_cols(Id a, Id b) {
    const Tensor<T>&av = value(a), &bv = value(b);
    if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[0] != bv.shape[0])
      throw ShapeMismatch("concat_cols " + shape_str(av) + " | " + shape_str(bv));
    const std::int64_t R = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
    Tensor<T> y = Tensor<T>::zeros({R, ca + cb});
    for (std::int64_t r = 0; r < R; ++r) {
      for (std::int64_t c = 0; c < ca; ++c) y(r, c) = av(r, c);
      for (std::int64_t c = 0; c < cb; ++c) y(r, ca + c) = bv(r, c);
    }
    auto bw = [this, a, b, ca, cb](const Tensor<T>& gy) {
      const std::int64_t R = gy.shape[0];
      if (requires_grad(a)) {
        Tensor<T>& ga = mutable_grad(a);
        for (std::int64_t r = 0; r < R; ++r)
          for (std::int64_t c = 0; c < ca; ++c) ga(r, c) += gy(r, c);
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = mutable_grad(b);
        for (std::int64_t r = 0; r < R; ++r)
          for (std::int64_t c = 0; c < cb; ++c) gb(r, c) += gy(r, ca + c);
      }
    };
    return push(std::move(y), any_grad({a, b}), bw, "concat_cols");
  }

  // Rows of x:[R,C] restricted to columns [start, start+len).
  Id slice_cols(Id x, std::int64_t start, std::int64_t len) {
    const Tensor<T>& xv = value(x);
    if (xv.shape.size() != 2 || start < 0 || len < 1 || start + len > xv.shape[1])
      throw ShapeMismatch("slice_cols out of range on " + shape_str(xv));
    const std::int64_t R = xv.shape[0];
    Tensor<T> y = Tensor<T>::zeros({R, len});
    for (std::int64_t r = 0; r < R; ++r)
      for (std::int64_t c = 0; c < len; ++c) y(r, c) = xv(r, start + c);
    auto bw = [this, x, start, len](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      for (std::int64_t r = 0; r < gy.shape[0]; ++r)
        for (std::int64_t c = 0; c < len; ++c) gx(r, start + c) += gy(r, c);
    };
    return push(std::move(y), any_grad({x}), bw, "slice_cols");
  }

  Id add(Id a, Id b) { return ew2(a, b, Ew::Add, "add"); }
  Id sub(Id a, Id b) { return ew2(a, b, Ew::Sub, "sub"); }
  Id mul(Id a, Id b) { return ew2(a, b, Ew::Mul, "mul"); }
  Id div(Id a, Id b) { return ew2(a, b, Ew::Div, "div"); }

  Id abs(Id x) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v = std::abs(v);
    auto bw = [this, x](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      const Tensor<T>& xv = value(x);
      Tensor<T>& gx = mutable_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        if (xv.data[i] > T(0)) gx.data[i] += gy.data[i];
        else if (xv.data[i] < T(0)) gx.data[i] -= gy.data[i];
      }
    };
    return push(std::move(y), any_grad({x}), bw, "abs");
  }

  Id sqrt(Id x) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v = std::sqrt(v);
    const Tensor<T> yv = y;
    auto bw = [this, x, yv](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i)
        gx.data[i] += gy.data[i] * T(0.5) / yv.data[i];
    };
    return push(std::move(y), any_grad({x}), bw, "sqrt");
  }

  // y = k*x + c elementwise with scalar constants.
  Id affine(Id x, T k, T c) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v = k * v + c;
    auto bw = [this, x, k](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i)
        gx.data[i] += k * gy.data[i];
    };
    return push(std::move(y), any_grad({x}), bw, "affine");
  }

  // Ordered full reduction to a [1] scalar.
  Id sum(Id x) {
    const Tensor<T>& xv = value(x);
    T acc = T(0);
    for (T v : xv.data) acc += v;
    auto bw = [this, x](const Tensor<T>& gy) {
      if (!requires_grad(x)) return;
      Tensor<T>& gx = mutable_grad(x);
      for (T& v : gx.data) v += gy.data[0];
    };
    return push(Tensor<T>::scalar(acc), any_grad({x}), bw, "sum");
  }

  // Seeds d(root)/d(root) = 1 and replays all closures in reverse
  // execution order. root must be a scalar.
  void backward(Id root) {
    if (value(root).numel() != 1)
      throw ShapeMismatch("backward root must be a scalar");
    nodes_[idx(root)].grad.data[0] = T(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(n.grad);
    }
    for (const Node& n : nodes_) {
      if (!n.requires_grad) continue;
      for (T v : n.grad.data)
        if (!std::isfinite(v)) throw NonFiniteValue("gradient of " + n.op);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void(const Tensor<T>&)> backward;
    std::string op;
  };

  std::vector<Node> nodes_;

  static std::size_t idx(Id id) { return static_cast<std::size_t>(id); }

  bool any_grad(std::initializer_list<Id> ids) const {
    for (Id id : ids)
      if (nodes_[idx(id)].requires_grad) return true;
    return false;
  }

  Tensor<T>& mutable_grad(Id id) { return nodes_[idx(id)].grad; }

  Id push(Tensor<T> value, bool requires_grad,
          std::function<void(const Tensor<T>&)> bw, const char* op) {
    for (T v : value.data)
      if (!std::isfinite(v)) throw NonFiniteValue(std::string(op) + " output");
    Node n;
    n.grad = Tensor<T>::zeros(value.shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(bw);
    n.op = op;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  enum class Ew { Add, Sub, Mul, Div };

  Id ew2(Id a, Id b, Ew op, const char* name) {
    const Tensor<T>&av = value(a), &bv = value(b);
    if (!av.same_shape(bv))
      throw ShapeMismatch(std::string(name) + " " + shape_str(av) + " vs " +
                          shape_str(bv));
    Tensor<T> y = av;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      switch (op) {
        case Ew::Add: y.data[i] = av.data[i] + bv.data[i]; break;
        case Ew::Sub: y.data[i] = av.data[i] - bv.data[i]; break;
        case Ew::Mul: y.data[i] = av.data[i] * bv.data[i]; break;
        case Ew::Div: y.data[i] = av.data[i] / bv.data[i]; break;
      }
    }
    auto bw = [this, a, b, op](const Tensor<T>& gy) {
      const Tensor<T>&av2 = value(a), &bv2 = value(b);
      const bool ga = requires_grad(a), gb = requires_grad(b);
      Tensor<T>*pa = ga ? &mutable_grad(a) : nullptr;
      Tensor<T>*pb = gb ? &mutable_grad(b) : nullptr;
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        const T g = gy.data[i];
        switch (op) {
          case Ew::Add:
            if (ga) pa->data[i] += g;
            if (gb) pb->data[i] += g;
            break;
          case Ew::Sub:
            if (ga) pa->data[i] += g;
            if (gb) pb->data[i] -= g;
            break;
          case Ew::Mul:
            if (ga) pa->data[i] += g * bv2.data[i];
            if (gb) pb->data[i] += g * av2.data[i];
            break;
          case Ew::Div:
            if (ga) pa->data[i] += g / bv2.data[i];
            if (gb) pb->data[i] -= g * av2.data[i] / (bv2.data[i] * bv2.data[i]);
            break;
        }
      }
    };
    return push(std::move(y), any_grad({a, b}), bw, name);
  }

  // Eigen views over tensor/grad storage.
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  static Eigen::Map<const RowMat> cmap(const Tensor<T>& t) {
    return {t.data.data(), t.shape[0], t.shape[1]};
  }
  static Eigen::Map<RowMat> cmat(Tensor<T>& t) {
    return {t.data.data(), t.shape[0], t.shape[1]};
  }
  static Eigen::Map<const ColVec> cvec(const Tensor<T>& t) {
    return {t.data.data(), t.numel()};
  }
  Eigen::Map<RowMat> gmat(Id id) {
    Tensor<T>& g = mutable_grad(id);
    return {g.data.data(), g.shape[0], g.shape[1]};
  }
  Eigen::Map<ColVec> gvec(Id id) {
    Tensor<T>& g = mutable_grad(id);
    return {g.data.data(), g.numel()};
  }
};

// Bias-corrected Adam over named tensors. Moments are created lazily the
// first time a parameter is seen.
template <typename T>
struct AdamState {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::int64_t step = 0;
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
};

template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params,
               const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, T lr) {
  state.step += 1;
  const T b1t = std::pow(state.beta1, T(state.step));
  const T b2t = std::pow(state.beta2, T(state.step));
  for (auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeMismatch("adam_step unknown param " + name);
    Tensor<T>& p = it->second;
    if (!p.same_shape(g))
      throw ShapeMismatch("adam_step shape mismatch for " + name);
    Tensor<T>& m = state.m.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
    Tensor<T>& v = state.v.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (T(1) - state.beta1) * g.data[i];
      v.data[i] = state.beta2 * v.data[i] + (T(1) - state.beta2) * g.data[i] * g.data[i];
      const T mhat = m.data[i] / (T(1) - b1t);
      const T vhat = v.data[i] / (T(1) - b2t);
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// A differentiable scalar function of several tensors, expressed as a
// graph builder: given a tape and the registered input ids, returns the
// id of a scalar output.
template <typename T>
using GraphFn =
    std::function<typename Tape<T>::Id(Tape<T>&, const std::vector<typename Tape<T>::Id>&)>;

// Central-difference gradient verification. Returns the worst relative
// error over every coordinate of every input, with absolute floor 1e-8.
// h is clamped into [1e-7, 1e-4].
template <typename T>
double grad_check(const GraphFn<T>& fn, const std::vector<Tensor<T>>& inputs,
                  double h_in = 1e-5) {
  static_assert(std::is_same_v<T, double>,
                "grad_check requires the 64-bit verification precision");
  const double h = std::min(1e-4, std::max(1e-7, h_in));

  Tape<T> tape;
  std::vector<typename Tape<T>::Id> ids;
  ids.reserve(inputs.size());
  for (const Tensor<T>& t : inputs) ids.push_back(tape.input(t, true));
  const auto out = fn(tape, ids);
  if (tape.value(out).numel() != 1)
    throw ShapeMismatch("grad_check needs a scalar function");
  tape.backward(out);
  std::vector<Tensor<T>> analytic;
  analytic.reserve(inputs.size());
  for (auto id : ids) analytic.push_back(tape.grad(id));

  const auto eval = [&fn](const std::vector<Tensor<T>>& pts) {
    Tape<T> t2;
    std::vector<typename Tape<T>::Id> ids2;
    ids2.reserve(pts.size());
    for (const Tensor<T>& t : pts) ids2.push_back(t2.input(t, false));
    return t2.value(fn(t2, ids2)).data[0];
  };

  double worst = 0.0;
  std::vector<Tensor<T>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].data.size(); ++j) {
      const T keep = probe[i].data[j];
      probe[i].data[j] = keep + T(h);
      const double fp = eval(probe);
      probe[i].data[j] = keep - T(h);
      const double fm = eval(probe);
      probe[i].data[j] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i].data[j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace lo
