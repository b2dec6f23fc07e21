#include "ftlab/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ftlab/rng.hpp"

namespace ftlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp3(double a, double b, double c) {
  return logsumexp2(logsumexp2(a, b), c);
}

Tensor gauss(const std::vector<std::size_t>& shape, double stddev,
             std::uint64_t seed, const std::string& name) {
  Rng rng(Rng::derive(seed, Rng::hash_str(name)));
  Tensor t(shape);
  for (double& v : t.values) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

void init_head(ParamStore& params, const HeadConfig& cfg, std::uint64_t seed) {
  params.add("head.w1", gauss({cfg.d_in, cfg.hidden},
                              1.0 / std::sqrt(double(cfg.d_in)), seed, "head.w1"));
  params.add("head.b1", Tensor({cfg.hidden}));
  params.add("head.w2", gauss({cfg.hidden, cfg.n_out},
                              1.0 / std::sqrt(double(cfg.hidden)), seed, "head.w2"));
  params.add("head.b2", Tensor({cfg.n_out}));
}

int head_forward(Tape& tape, const ParamStore& params, const HeadConfig& cfg,
                 int latents, bool as_constants) {
  check(tape.val(latents).cols() == cfg.d_in,
        "head_forward: latent dim mismatch");
  auto leaf = [&](const std::string& n) {
    return as_constants ? tape.constant(params.get(n))
                        : tape.param(params.get(n), n);
  };
  int h = tape.relu(tape.add_row(tape.matmul(latents, leaf("head.w1")),
                                 leaf("head.b1")));
  int logits = tape.add_row(tape.matmul(h, leaf("head.w2")), leaf("head.b2"));
  return tape.log_softmax_rows(logits);
}

std::size_t ctc_min_frames(const std::vector<std::size_t>& target) {
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++repeats;
  return target.size() + repeats;
}

int ctc_loss(Tape& tape, int log_probs, const std::vector<std::size_t>& target,
             std::size_t blank) {
  const Tensor& LP = tape.val(log_probs);
  std::size_t T = LP.rows(), C = LP.cols();
  for (std::size_t y : target)
    check(y != blank && y < C, "ctc_loss: target label out of range");
  check(T >= ctc_min_frames(target),
        "ctc_loss: target too long for " + std::to_string(T) +
            " frames (no valid alignment)");

  std::size_t L = target.size();
  std::size_t S = 2 * L + 1;
  auto lab = [&](std::size_t s) { return s % 2 == 0 ? blank : target[s / 2]; };

  // forward variables, log space; alpha includes the emission at t
  std::vector<std::vector<double>> alpha(T, std::vector<double>(S, kNegInf));
  alpha[0][0] = LP.at(0, blank);
  if (S > 1) alpha[0][1] = LP.at(0, lab(1));
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[t - 1][s];
      if (s >= 1) a = logsumexp2(a, alpha[t - 1][s - 1]);
      if (s >= 2 && lab(s) != blank && lab(s) != lab(s - 2))
        a = logsumexp2(a, alpha[t - 1][s - 2]);
      alpha[t][s] = a + LP.at(t, lab(s));
    }
  double logp = alpha[T - 1][S - 1];
  if (S > 1) logp = logsumexp2(logp, alpha[T - 1][S - 2]);
  check(logp != kNegInf, "ctc_loss: zero-probability alignment");
  double nll = -logp;

  // backward variables exclude the emission at t, so p(y) = sum_s a_t b_t
  std::vector<std::vector<double>> beta(T, std::vector<double>(S, kNegInf));
  beta[T - 1][S - 1] = 0.0;
  if (S > 1) beta[T - 1][S - 2] = 0.0;
  for (std::size_t t = T - 1; t > 0; --t)
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[t][s] + LP.at(t, lab(s));
      if (s + 1 < S) b = logsumexp2(b, beta[t][s + 1] + LP.at(t, lab(s + 1)));
      if (s + 2 < S && lab(s + 2) != blank && lab(s + 2) != lab(s))
        b = logsumexp2(b, beta[t][s + 2] + LP.at(t, lab(s + 2)));
      beta[t - 1][s] = b;
    }

  // d(nll)/d(logp_t(k)) = -(1/p) sum_{s: lab(s)=k} alpha_t(s) beta_t(s)
  Tensor glp(LP.shape);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> per_class(C, kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      double v = alpha[t][s] + beta[t][s];
      per_class[lab(s)] = logsumexp2(per_class[lab(s)], v);
    }
    for (std::size_t k = 0; k < C; ++k)
      if (per_class[k] != kNegInf)
        glp.at(t, k) = -std::exp(per_class[k] + nll);
  }

  return tape.custom(
      Tensor::scalar(nll), {log_probs},
      [glp](Tape& t, int self) {
        auto& n = t.node(self);
        Tensor g = glp;
        double up = n.grad.values[0];
        for (double& v : g.values) v *= up;
        t.accum_grad(n.parents[0], g);
      },
      "ctc_loss");
}

std::vector<std::size_t> greedy_decode(const Tensor& log_probs,
                                       std::size_t blank) {
  std::vector<std::size_t> out;
  std::size_t prev = std::size_t(-1);
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < log_probs.cols(); ++c)
      if (log_probs.at(t, c) > log_probs.at(t, best)) best = c;
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

std::size_t levenshtein(const std::vector<std::string>& a,
                        const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::vector<std::string> tokenize(const std::string& s, ErrorUnit unit) {
  std::vector<std::string> out;
  if (unit == ErrorUnit::character) {
    for (char c : s) out.emplace_back(1, c);
  } else {
    std::string cur;
    for (char c : s) {
      if (c == ' ') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace

double error_rate(const std::vector<std::string>& hypotheses,
                  const std::vector<std::string>& references, ErrorUnit unit) {
  check(hypotheses.size() == references.size(),
        "error_rate: list length mismatch");
  std::size_t dist = 0, total = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    auto h = tokenize(hypotheses[i], unit);
    auto r = tokenize(references[i], unit);
    dist += levenshtein(h, r);
    total += r.size();
  }
  check(total > 0, "error_rate: zero total reference length");
  return double(dist) / double(total);
}

}  // namespace ftlab
