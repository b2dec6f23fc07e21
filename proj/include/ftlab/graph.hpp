#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ftlab/tensor.hpp"

namespace ftlab {

// Reverse-mode tape over dense double tensors. A fresh tape is recorded per
// training step; nodes are append-only and backward walks them in reverse.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int)>;

  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool needs_grad = false;
    bool grad_ready = false;
    std::vector<int> parents;
    BackFn backward;
    std::string param;  // parameter name for trainable leaves
  };

  // Leaves. Parameter leaves participate in backward; constants do not.
  int param(const Tensor& v, const std::string& name);
  int constant(const Tensor& v);

  // Elementwise / shape ops.
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double c);
  int add_row(int x, int row);  // [T x d] + [d] broadcast
  int matmul(int a, int b);
  int transpose(int a);
  int slice_cols(int a, std::size_t c0, std::size_t c1);
  int concat_cols(const std::vector<int>& parts);

  // 1-D convolution along rows (time). x: [T x Cin], w: [(k*Cin) x Cout],
  // b: [Cout]. Right zero padding, output length ceil(T / stride).
  int conv1d(int x, int w, int b, std::size_t kernel, std::size_t stride);

  // Nonlinearities & normalization.
  int relu(int a);
  int gelu(int a);
  int layer_norm(int x, int gain, int bias, double eps = 1e-5);
  int softmax_rows(int a);
  int log_softmax_rows(int a);

  // Reductions / special forms.
  int sum(int a);  // scalar
  int convex_combine(int weights, const std::vector<int>& layers);
  int mask_rows(int x, const std::vector<char>& mask, int embed);
  int masked_mse(int x, const Tensor& target, const std::vector<char>& mask);

  // Escape hatch for primitives with bespoke backward (CTC, EWC penalty).
  int custom(Tensor value, std::vector<int> parents, BackFn back,
             const char* opname);

  void backward(int loss);

  const Tensor& val(int id) const { return nodes_[id].value; }
  Node& node(int id) { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a leaf after backward(); zeros if the leaf was unreachable.
  Tensor grad_or_zero(int id) const;

  // Gradients of every parameter leaf, keyed by name. Repeated leaves with
  // the same name accumulate.
  std::map<std::string, Tensor> param_grads() const;

  void accum_grad(int id, const Tensor& g);

 private:
  int emit(Tensor value, std::vector<int> parents, BackFn back,
           const char* opname);
  std::vector<Node> nodes_;
};

}  // namespace ftlab
