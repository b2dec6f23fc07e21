#include "ftlab/graph.hpp"

#include <algorithm>
#include <cmath>

namespace ftlab {

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}

int Tape::emit(Tensor value, std::vector<int> parents, BackFn back,
               const char* opname) {
  check(value.all_finite(),
        std::string("non-finite value produced by op '") + opname + "'");
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.backward = std::move(back);
  for (int p : n.parents)
    if (nodes_[p].needs_grad) n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::param(const Tensor& v, const std::string& name) {
  check(v.all_finite(), "non-finite parameter leaf '" + name + "'");
  Node n;
  n.value = v;
  n.needs_grad = true;
  n.param = name;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::constant(const Tensor& v) {
  check(v.all_finite(), "non-finite constant leaf");
  Node n;
  n.value = v;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

void Tape::accum_grad(int id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape);
    n.grad_ready = true;
  }
  for (std::size_t i = 0; i < g.values.size(); ++i) n.grad.values[i] += g.values[i];
}

int Tape::add(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.same_shape(B), "add: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
  Tensor out(A.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = A.values[i] + B.values[i];
  return emit(std::move(out), {a, b},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                t.accum_grad(n.parents[0], n.grad);
                t.accum_grad(n.parents[1], n.grad);
              },
              "add");
}

int Tape::sub(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.same_shape(B), "sub: shape mismatch");
  Tensor out(A.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = A.values[i] - B.values[i];
  return emit(std::move(out), {a, b},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                t.accum_grad(n.parents[0], n.grad);
                Tensor neg = n.grad;
                for (double& v : neg.values) v = -v;
                t.accum_grad(n.parents[1], neg);
              },
              "sub");
}

int Tape::mul(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.same_shape(B), "mul: shape mismatch");
  Tensor out(A.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = A.values[i] * B.values[i];
  return emit(std::move(out), {a, b},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                Tensor ga(n.grad.shape), gb(n.grad.shape);
                const Tensor& A = t.val(n.parents[0]);
                const Tensor& B = t.val(n.parents[1]);
                for (std::size_t i = 0; i < n.grad.values.size(); ++i) {
                  ga.values[i] = n.grad.values[i] * B.values[i];
                  gb.values[i] = n.grad.values[i] * A.values[i];
                }
                t.accum_grad(n.parents[0], ga);
                t.accum_grad(n.parents[1], gb);
              },
              "mul");
}

int Tape::scale(int a, double c) {
  Tensor out = val(a);
  for (double& v : out.values) v *= c;
  return emit(std::move(out), {a},
              [c](Tape& t, int self) {
                auto& n = t.node(self);
                Tensor g = n.grad;
                for (double& v : g.values) v *= c;
                t.accum_grad(n.parents[0], g);
              },
              "scale");
}

int Tape::add_row(int x, int row) {
  const Tensor& X = val(x);
  const Tensor& R = val(row);
  check(R.numel() == X.cols(), "add_row: width mismatch");
  Tensor out = X;
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < X.cols(); ++c) out.at(r, c) += R.values[c];
  return emit(std::move(out), {x, row},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                t.accum_grad(n.parents[0], n.grad);
                const Tensor& G = n.grad;
                Tensor gr(t.val(n.parents[1]).shape);
                for (std::size_t r = 0; r < G.rows(); ++r)
                  for (std::size_t c = 0; c < G.cols(); ++c)
                    gr.values[c] += G.at(r, c);
                t.accum_grad(n.parents[1], gr);
              },
              "add_row");
}

int Tape::matmul(int a, int b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.cols() == B.rows(), "matmul: inner dim mismatch " + shape_str(A) +
                                  " * " + shape_str(B));
  std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = A.at(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) += av * B.at(p, j);
    }
  return emit(std::move(out), {a, b},
              [](Tape& t, int self) {
                auto& nd = t.node(self);
                const Tensor& A = t.val(nd.parents[0]);
                const Tensor& B = t.val(nd.parents[1]);
                const Tensor& G = nd.grad;
                std::size_t n = A.rows(), k = A.cols(), m = B.cols();
                Tensor ga(A.shape), gb(B.shape);
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < m; ++j) {
                    double g = G.at(i, j);
                    if (g == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) {
                      ga.at(i, p) += g * B.at(p, j);
                      gb.at(p, j) += g * A.at(i, p);
                    }
                  }
                t.accum_grad(nd.parents[0], ga);
                t.accum_grad(nd.parents[1], gb);
              },
              "matmul");
}

int Tape::transpose(int a) {
  const Tensor& A = val(a);
  Tensor out({A.cols(), A.rows()});
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) out.at(c, r) = A.at(r, c);
  return emit(std::move(out), {a},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& G = n.grad;
                Tensor g({G.cols(), G.rows()});
                for (std::size_t r = 0; r < G.rows(); ++r)
                  for (std::size_t c = 0; c < G.cols(); ++c)
                    g.at(c, r) = G.at(r, c);
                t.accum_grad(n.parents[0], g);
              },
              "transpose");
}

int Tape::slice_cols(int a, std::size_t c0, std::size_t c1) {
  const Tensor& A = val(a);
  check(c0 < c1 && c1 <= A.cols(), "slice_cols: bad range");
  Tensor out({A.rows(), c1 - c0});
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = A.at(r, c);
  return emit(std::move(out), {a},
              [c0](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& G = n.grad;
                Tensor g(t.val(n.parents[0]).shape);
                for (std::size_t r = 0; r < G.rows(); ++r)
                  for (std::size_t c = 0; c < G.cols(); ++c)
                    g.at(r, c0 + c) = G.at(r, c);
                t.accum_grad(n.parents[0], g);
              },
              "slice_cols");
}

int Tape::concat_cols(const std::vector<int>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  std::size_t rows = val(parts[0]).rows(), cols = 0;
  for (int p : parts) {
    check(val(p).rows() == rows, "concat_cols: row mismatch");
    cols += val(p).cols();
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (int p : parts) {
    const Tensor& P = val(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < P.cols(); ++c) out.at(r, off + c) = P.at(r, c);
    off += P.cols();
  }
  return emit(std::move(out), parts,
              [](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& G = n.grad;
                std::size_t off = 0;
                for (int p : n.parents) {
                  const Tensor& P = t.val(p);
                  Tensor g(P.shape);
                  for (std::size_t r = 0; r < P.rows(); ++r)
                    for (std::size_t c = 0; c < P.cols(); ++c)
                      g.at(r, c) = G.at(r, off + c);
                  t.accum_grad(p, g);
                  off += P.cols();
                }
              },
              "concat_cols");
}

int Tape::conv1d(int x, int w, int b, std::size_t kernel, std::size_t stride) {
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  const Tensor& B = val(b);
  std::size_t T = X.rows(), cin = X.cols(), cout = W.cols();
  check(stride >= 1, "conv1d: stride must be >= 1");
  check(W.rows() == kernel * cin, "conv1d: weight rows != kernel*Cin");
  check(B.numel() == cout, "conv1d: bias dim mismatch");
  check(T >= 1, "conv1d: empty input");
  std::size_t Tout = (T + stride - 1) / stride;
  Tensor out({Tout, cout});
  for (std::size_t t = 0; t < Tout; ++t) {
    for (std::size_t kk = 0; kk < kernel; ++kk) {
      std::size_t ti = t * stride + kk;
      if (ti >= T) continue;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double xv = X.at(ti, ci);
        if (xv == 0.0) continue;
        std::size_t wr = kk * cin + ci;
        for (std::size_t co = 0; co < cout; ++co)
          out.at(t, co) += xv * W.at(wr, co);
      }
    }
    for (std::size_t co = 0; co < cout; ++co) out.at(t, co) += B.values[co];
  }
  return emit(std::move(out), {x, w, b},
              [kernel, stride](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& X = t.val(n.parents[0]);
                const Tensor& W = t.val(n.parents[1]);
                const Tensor& G = n.grad;
                std::size_t T = X.rows(), cin = X.cols(), cout = W.cols();
                Tensor gx(X.shape), gw(W.shape), gb({cout});
                for (std::size_t to = 0; to < G.rows(); ++to) {
                  for (std::size_t co = 0; co < cout; ++co)
                    gb.values[co] += G.at(to, co);
                  for (std::size_t kk = 0; kk < kernel; ++kk) {
                    std::size_t ti = to * stride + kk;
                    if (ti >= T) continue;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                      std::size_t wr = kk * cin + ci;
                      for (std::size_t co = 0; co < cout; ++co) {
                        double g = G.at(to, co);
                        gx.at(ti, ci) += g * W.at(wr, co);
                        gw.at(wr, co) += g * X.at(ti, ci);
                      }
                    }
                  }
                }
                t.accum_grad(n.parents[0], gx);
                t.accum_grad(n.parents[1], gw);
                t.accum_grad(n.parents[2], gb);
              },
              "conv1d");
}

int Tape::relu(int a) {
  Tensor out = val(a);
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  return emit(std::move(out), {a},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& X = t.val(n.parents[0]);
                Tensor g(n.grad.shape);
                for (std::size_t i = 0; i < g.values.size(); ++i)
                  g.values[i] = X.values[i] > 0.0 ? n.grad.values[i] : 0.0;
                t.accum_grad(n.parents[0], g);
              },
              "relu");
}

int Tape::gelu(int a) {
  Tensor out = val(a);
  for (double& v : out.values) {
    double u = kGeluC * (v + 0.044715 * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return emit(std::move(out), {a},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& X = t.val(n.parents[0]);
                Tensor g(n.grad.shape);
                for (std::size_t i = 0; i < g.values.size(); ++i) {
                  double x = X.values[i];
                  double u = kGeluC * (x + 0.044715 * x * x * x);
                  double th = std::tanh(u);
                  double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
                  double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
                  g.values[i] = n.grad.values[i] * d;
                }
                t.accum_grad(n.parents[0], g);
              },
              "gelu");
}

int Tape::layer_norm(int x, int gain, int bias, double eps) {
  const Tensor& X = val(x);
  const Tensor& G = val(gain);
  const Tensor& B = val(bias);
  std::size_t d = X.cols();
  check(G.numel() == d && B.numel() == d, "layer_norm: affine dim mismatch");
  Tensor out(X.shape);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += X.at(r, c);
    mu /= double(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double v = X.at(r, c) - mu;
      var += v * v;
    }
    var /= double(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c)
      out.at(r, c) = (X.at(r, c) - mu) * inv * G.values[c] + B.values[c];
  }
  return emit(std::move(out), {x, gain, bias},
              [eps](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& X = t.val(n.parents[0]);
                const Tensor& G = t.val(n.parents[1]);
                const Tensor& dY = n.grad;
                std::size_t d = X.cols();
                Tensor gx(X.shape), gg({d}), gb({d});
                for (std::size_t r = 0; r < X.rows(); ++r) {
                  double mu = 0.0;
                  for (std::size_t c = 0; c < d; ++c) mu += X.at(r, c);
                  mu /= double(d);
                  double var = 0.0;
                  for (std::size_t c = 0; c < d; ++c) {
                    double v = X.at(r, c) - mu;
                    var += v * v;
                  }
                  var /= double(d);
                  double inv = 1.0 / std::sqrt(var + eps);
                  double m1 = 0.0, m2 = 0.0;  // mean(dyh), mean(dyh*xh)
                  for (std::size_t c = 0; c < d; ++c) {
                    double xh = (X.at(r, c) - mu) * inv;
                    double dyh = dY.at(r, c) * G.values[c];
                    m1 += dyh;
                    m2 += dyh * xh;
                    gg.values[c] += dY.at(r, c) * xh;
                    gb.values[c] += dY.at(r, c);
                  }
                  m1 /= double(d);
                  m2 /= double(d);
                  for (std::size_t c = 0; c < d; ++c) {
                    double xh = (X.at(r, c) - mu) * inv;
                    double dyh = dY.at(r, c) * G.values[c];
                    gx.at(r, c) = inv * (dyh - m1 - xh * m2);
                  }
                }
                t.accum_grad(n.parents[0], gx);
                t.accum_grad(n.parents[1], gg);
                t.accum_grad(n.parents[2], gb);
              },
              "layer_norm");
}

int Tape::softmax_rows(int a) {
  const Tensor& A = val(a);
  Tensor out(A.shape);
  std::size_t d = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mx = A.at(r, 0);
    for (std::size_t c = 1; c < d; ++c) mx = std::max(mx, A.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < d; ++c) z += std::exp(A.at(r, c) - mx);
    for (std::size_t c = 0; c < d; ++c)
      out.at(r, c) = std::exp(A.at(r, c) - mx) / z;
  }
  return emit(std::move(out), {a},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& Y = n.value;
                const Tensor& dY = n.grad;
                Tensor g(Y.shape);
                std::size_t d = Y.cols();
                for (std::size_t r = 0; r < Y.rows(); ++r) {
                  double dot = 0.0;
                  for (std::size_t c = 0; c < d; ++c) dot += dY.at(r, c) * Y.at(r, c);
                  for (std::size_t c = 0; c < d; ++c)
                    g.at(r, c) = Y.at(r, c) * (dY.at(r, c) - dot);
                }
                t.accum_grad(n.parents[0], g);
              },
              "softmax_rows");
}

int Tape::log_softmax_rows(int a) {
  const Tensor& A = val(a);
  Tensor out(A.shape);
  std::size_t d = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mx = A.at(r, 0);
    for (std::size_t c = 1; c < d; ++c) mx = std::max(mx, A.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < d; ++c) z += std::exp(A.at(r, c) - mx);
    double lz = mx + std::log(z);
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) = A.at(r, c) - lz;
  }
  return emit(std::move(out), {a},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& Y = n.value;  // log-probs
                const Tensor& dY = n.grad;
                Tensor g(Y.shape);
                std::size_t d = Y.cols();
                for (std::size_t r = 0; r < Y.rows(); ++r) {
                  double s = 0.0;
                  for (std::size_t c = 0; c < d; ++c) s += dY.at(r, c);
                  for (std::size_t c = 0; c < d; ++c)
                    g.at(r, c) = dY.at(r, c) - std::exp(Y.at(r, c)) * s;
                }
                t.accum_grad(n.parents[0], g);
              },
              "log_softmax_rows");
}

int Tape::sum(int a) {
  const Tensor& A = val(a);
  double s = 0.0;
  for (double v : A.values) s += v;
  return emit(Tensor::scalar(s), {a},
              [](Tape& t, int self) {
                auto& n = t.node(self);
                Tensor g(t.val(n.parents[0]).shape);
                double gv = n.grad.values[0];
                for (double& v : g.values) v = gv;
                t.accum_grad(n.parents[0], g);
              },
              "sum");
}

int Tape::convex_combine(int weights, const std::vector<int>& layers) {
  const Tensor& W = val(weights);
  check(W.numel() == layers.size(), "convex_combine: weight/layer count mismatch");
  const Tensor& L0 = val(layers[0]);
  Tensor out(L0.shape);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& L = val(layers[l]);
    check(L.same_shape(L0), "convex_combine: layer shape mismatch");
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] += W.values[l] * L.values[i];
  }
  std::vector<int> parents = {weights};
  parents.insert(parents.end(), layers.begin(), layers.end());
  return emit(std::move(out), std::move(parents),
              [](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& W = t.val(n.parents[0]);
                const Tensor& G = n.grad;
                Tensor gw(W.shape);
                for (std::size_t l = 0; l + 1 < n.parents.size(); ++l) {
                  int lid = n.parents[l + 1];
                  const Tensor& L = t.val(lid);
                  double dot = 0.0;
                  for (std::size_t i = 0; i < G.values.size(); ++i)
                    dot += G.values[i] * L.values[i];
                  gw.values[l] = dot;
                  Tensor gl(L.shape);
                  for (std::size_t i = 0; i < G.values.size(); ++i)
                    gl.values[i] = W.values[l] * G.values[i];
                  t.accum_grad(lid, gl);
                }
                t.accum_grad(n.parents[0], gw);
              },
              "convex_combine");
}

int Tape::mask_rows(int x, const std::vector<char>& mask, int embed) {
  const Tensor& X = val(x);
  const Tensor& E = val(embed);
  check(mask.size() == X.rows(), "mask_rows: mask length mismatch");
  check(E.numel() == X.cols(), "mask_rows: embed dim mismatch");
  Tensor out = X;
  for (std::size_t r = 0; r < X.rows(); ++r)
    if (mask[r])
      for (std::size_t c = 0; c < X.cols(); ++c) out.at(r, c) = E.values[c];
  return emit(std::move(out), {x, embed},
              [mask](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& G = n.grad;
                Tensor gx(t.val(n.parents[0]).shape);
                Tensor ge(t.val(n.parents[1]).shape);
                for (std::size_t r = 0; r < G.rows(); ++r)
                  for (std::size_t c = 0; c < G.cols(); ++c) {
                    if (mask[r])
                      ge.values[c] += G.at(r, c);
                    else
                      gx.at(r, c) = G.at(r, c);
                  }
                t.accum_grad(n.parents[0], gx);
                t.accum_grad(n.parents[1], ge);
              },
              "mask_rows");
}

int Tape::masked_mse(int x, const Tensor& target, const std::vector<char>& mask) {
  const Tensor& X = val(x);
  check(X.same_shape(target), "masked_mse: target shape mismatch");
  check(mask.size() == X.rows(), "masked_mse: mask length mismatch");
  std::size_t nmask = 0;
  for (char m : mask)
    if (m) ++nmask;
  check(nmask > 0, "masked_mse: empty mask");
  double denom = double(nmask * X.cols());
  double acc = 0.0;
  for (std::size_t r = 0; r < X.rows(); ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < X.cols(); ++c) {
      double d = X.at(r, c) - target.at(r, c);
      acc += d * d;
    }
  }
  return emit(Tensor::scalar(acc / denom), {x},
              [target, mask, denom](Tape& t, int self) {
                auto& n = t.node(self);
                const Tensor& X = t.val(n.parents[0]);
                Tensor g(X.shape);
                double gv = n.grad.values[0];
                for (std::size_t r = 0; r < X.rows(); ++r) {
                  if (!mask[r]) continue;
                  for (std::size_t c = 0; c < X.cols(); ++c)
                    g.at(r, c) = gv * 2.0 * (X.at(r, c) - target.at(r, c)) / denom;
                }
                t.accum_grad(n.parents[0], g);
              },
              "masked_mse");
}

int Tape::custom(Tensor value, std::vector<int> parents, BackFn back,
                 const char* opname) {
  return emit(std::move(value), std::move(parents), std::move(back), opname);
}

void Tape::backward(int loss) {
  check(val(loss).numel() == 1, "backward: loss must be scalar");
  check(nodes_[loss].needs_grad,
        "backward: loss does not depend on any parameter");
  accum_grad(loss, Tensor::scalar(1.0));
  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.grad_ready) continue;
    if (n.backward) n.backward(*this, id);
  }
}

Tensor Tape::grad_or_zero(int id) const {
  const Node& n = nodes_[id];
  if (n.grad_ready) return n.grad;
  return Tensor(n.value.shape);
}

std::map<std::string, Tensor> Tape::param_grads() const {
  std::map<std::string, Tensor> out;
  for (const Node& n : nodes_) {
    if (n.param.empty()) continue;
    auto it = out.find(n.param);
    Tensor g = n.grad_ready ? n.grad : Tensor(n.value.shape);
    if (it == out.end()) {
      out.emplace(n.param, std::move(g));
    } else {
      for (std::size_t i = 0; i < g.values.size(); ++i)
        it->second.values[i] += g.values[i];
    }
  }
  return out;
}

}  // namespace ftlab
