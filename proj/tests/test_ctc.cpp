#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "ftlab/ctc.hpp"
#include "ftlab/gradcheck.hpp"
#include "ftlab/rng.hpp"

using namespace ftlab;

namespace {

// Log-probability rows from random logits, normalized exactly like the head.
Tensor random_log_probs(std::size_t T, std::size_t n, Rng& rng) {
  Tensor lp({T, n});
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -1e300;
    for (std::size_t k = 0; k < n; ++k) {
      lp.at(t, k) = rng.normal(0.0, 1.5);
      mx = std::max(mx, lp.at(t, k));
    }
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) z += std::exp(lp.at(t, k) - mx);
    double lz = mx + std::log(z);
    for (std::size_t k = 0; k < n; ++k) lp.at(t, k) -= lz;
  }
  return lp;
}

std::vector<std::size_t> collapse(const std::vector<std::size_t>& path,
                                  std::size_t blank) {
  std::vector<std::size_t> out;
  std::size_t prev = std::size_t(-1);
  for (std::size_t s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

// Brute force: enumerate every frame labeling, sum the probability of those
// collapsing to the target.
double brute_force_nll(const Tensor& lp, const std::vector<std::size_t>& target,
                       std::size_t blank) {
  std::size_t T = lp.rows(), n = lp.cols();
  double total = 0.0;
  std::vector<std::size_t> path(T, 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t t, double logp) {
    if (t == T) {
      if (collapse(path, blank) == target) total += std::exp(logp);
      return;
    }
    for (std::size_t k = 0; k < n; ++k) {
      path[t] = k;
      rec(t + 1, logp + lp.at(t, k));
    }
  };
  rec(0, 0.0);
  return -std::log(total);
}

double ctc_value(const Tensor& lp, const std::vector<std::size_t>& target) {
  Tape t;
  return t.val(ctc_loss(t, t.constant(lp), target)).values[0];
}

}  // namespace

TEST_CASE("head_forward: rows are normalized log-probabilities") {
  HeadConfig hc{8, 6, 5};
  ParamStore ps;
  init_head(ps, hc, 3);
  Rng rng(4);
  Tensor latents({7, 8});
  for (double& v : latents.values) v = rng.normal();
  Tape t;
  int lp = head_forward(t, ps, hc, t.constant(latents));
  const Tensor& L = t.val(lp);
  REQUIRE(L.rows() == 7);
  REQUIRE(L.cols() == 5);
  for (std::size_t r = 0; r < L.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < L.cols(); ++c) s += std::exp(L.at(r, c));
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("head_forward: zero weights give the uniform distribution") {
  HeadConfig hc{4, 3, 5};
  ParamStore ps;
  init_head(ps, hc, 1);
  for (const auto& name : ps.names())
    if (name.rfind("head.", 0) == 0)
      for (double& v : ps.get(name).values) v = 0.0;
  Tape t;
  Tensor latents({2, 4}, {1, 2, 3, 4, -1, -2, -3, -4});
  int lp = head_forward(t, ps, hc, t.constant(latents));
  for (double v : t.val(lp).values)
    CHECK(v == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("head_forward: matches an independent two-layer evaluation") {
  HeadConfig hc{3, 2, 4};
  ParamStore ps;
  init_head(ps, hc, 5);
  Rng rng(6);
  Tensor x({2, 3});
  for (double& v : x.values) v = rng.normal();
  Tape t;
  int lp = head_forward(t, ps, hc, t.constant(x));

  const Tensor& w1 = ps.get("head.w1");
  const Tensor& b1 = ps.get("head.b1");
  const Tensor& w2 = ps.get("head.w2");
  const Tensor& b2 = ps.get("head.b2");
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> h(hc.hidden, 0.0), o(hc.n_out, 0.0);
    for (std::size_t j = 0; j < hc.hidden; ++j) {
      double z = b1.values[j];
      for (std::size_t i = 0; i < hc.d_in; ++i) z += x.at(r, i) * w1.at(i, j);
      h[j] = std::max(z, 0.0);
    }
    double mx = -1e300;
    for (std::size_t k = 0; k < hc.n_out; ++k) {
      o[k] = b2.values[k];
      for (std::size_t j = 0; j < hc.hidden; ++j) o[k] += h[j] * w2.at(j, k);
      mx = std::max(mx, o[k]);
    }
    double z = 0.0;
    for (double v : o) z += std::exp(v - mx);
    double lz = mx + std::log(z);
    for (std::size_t k = 0; k < hc.n_out; ++k)
      CHECK(t.val(lp).at(r, k) == doctest::Approx(o[k] - lz).epsilon(1e-12));
  }
}

TEST_CASE("ctc_loss: single frame, single character") {
  Rng rng(7);
  Tensor lp = random_log_probs(1, 3, rng);
  CHECK(ctc_value(lp, {1}) == doctest::Approx(-lp.at(0, 1)).epsilon(1e-12));
}

TEST_CASE("ctc_loss: two frames, one character enumerates three paths") {
  Rng rng(8);
  Tensor lp = random_log_probs(2, 3, rng);
  double p = std::exp(lp.at(0, 1)) * std::exp(lp.at(1, 1)) +
             std::exp(lp.at(0, 1)) * std::exp(lp.at(1, 0)) +
             std::exp(lp.at(0, 0)) * std::exp(lp.at(1, 1));
  CHECK(ctc_value(lp, {1}) == doctest::Approx(-std::log(p)).epsilon(1e-10));
}

TEST_CASE("ctc_loss: empty target is the all-blank path") {
  Rng rng(9);
  Tensor lp = random_log_probs(2, 3, rng);
  CHECK(ctc_value(lp, {}) ==
        doctest::Approx(-(lp.at(0, 0) + lp.at(1, 0))).epsilon(1e-10));
}

TEST_CASE("ctc_loss: target without a valid alignment is an error") {
  Rng rng(10);
  Tensor lp = random_log_probs(2, 3, rng);
  Tape t;
  CHECK_THROWS(ctc_loss(t, t.constant(lp), {1, 2, 1}));       // |y| > T'
  Tape t2;
  CHECK_THROWS(ctc_loss(t2, t2.constant(lp), {1, 1}));        // repeat needs 3
  CHECK(ctc_min_frames({1, 1, 2, 2}) == 6);
  CHECK(ctc_min_frames({1, 2, 3}) == 3);
}

TEST_CASE("ctc_loss: matches brute-force enumeration on random small cases") {
  Rng rng(11);
  for (int cs = 0; cs < 60; ++cs) {
    std::size_t T = 1 + rng.below(6);
    std::size_t V = 1 + rng.below(4);
    Tensor lp = random_log_probs(T, V + 1, rng);
    std::vector<std::size_t> target;
    std::size_t len = rng.below(4);  // |y| <= 3
    for (std::size_t i = 0; i < len; ++i) target.push_back(1 + rng.below(V));
    if (ctc_min_frames(target) > T) continue;
    double got = ctc_value(lp, target);
    double want = brute_force_nll(lp, target, 0);
    CHECK(std::abs(got - want) <= 1e-6);
  }
}

TEST_CASE("ctc_loss: probabilities over all targets sum to at most 1") {
  Rng rng(12);
  const std::size_t T = 3, V = 2;
  Tensor lp = random_log_probs(T, V + 1, rng);
  // every target of length <= T over {1,2}
  double mass = 0.0;
  std::vector<std::vector<std::size_t>> targets = {{}};
  for (std::size_t len = 1; len <= T; ++len) {
    std::vector<std::size_t> idx(len, 1);
    while (true) {
      targets.push_back(idx);
      std::size_t k = 0;
      while (k < len && ++idx[k] > V) idx[k++] = 1;
      if (k == len) break;
    }
  }
  for (const auto& y : targets) {
    if (ctc_min_frames(y) > T) continue;
    mass += std::exp(-ctc_value(lp, y));
  }
  CHECK(mass <= 1.0 + 1e-9);
  CHECK(mass > 0.0);
}

TEST_CASE("ctc_loss: gradient matches finite differences through the head") {
  HeadConfig hc{4, 5, 4};
  ParamStore ps;
  init_head(ps, hc, 13);
  Rng rng(14);
  Tensor latents({5, 4});
  for (double& v : latents.values) v = rng.normal();
  std::vector<std::size_t> target = {1, 3, 2};
  LossFn f = [&](Tape& t, const ParamStore& p) {
    int lp = head_forward(t, p, hc, t.constant(latents));
    return ctc_loss(t, lp, target);
  };
  CHECK(finite_diff_check(f, ps, ps.names(), 1e-5, 15, 15) <= 1e-4);
}

TEST_CASE("greedy_decode: collapse and blank-removal rules") {
  auto lp_from_path = [](const std::vector<std::size_t>& path, std::size_t n) {
    Tensor lp({path.size(), n});
    for (std::size_t t = 0; t < path.size(); ++t)
      for (std::size_t k = 0; k < n; ++k)
        lp.at(t, k) = (k == path[t]) ? -0.1 : -5.0;
    return lp;
  };
  CHECK(greedy_decode(lp_from_path({0, 1, 1, 0, 2}, 3)) ==
        std::vector<std::size_t>{1, 2});
  CHECK(greedy_decode(lp_from_path({0, 0, 0}, 3)).empty());
  CHECK(greedy_decode(lp_from_path({1, 1, 0, 1}, 3)) ==
        std::vector<std::size_t>{1, 1});
}

TEST_CASE("greedy_decode: ties break toward the lowest index") {
  Tensor lp({1, 3}, {-1.0, -1.0, -2.0});
  CHECK(greedy_decode(lp) == std::vector<std::size_t>{});  // blank wins the tie
  Tensor lp2({1, 3}, {-2.0, -1.0, -1.0});
  CHECK(greedy_decode(lp2) == std::vector<std::size_t>{1});
}

TEST_CASE("error_rate: exact match is zero") {
  CHECK(error_rate({"abc"}, {"abc"}, ErrorUnit::character) == 0.0);
  CHECK(error_rate({"a b"}, {"a b"}, ErrorUnit::word) == 0.0);
}

TEST_CASE("error_rate: one substitution out of three words") {
  CHECK(error_rate({"a x c"}, {"a b c"}, ErrorUnit::word) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("error_rate: empty hypothesis is all deletions") {
  CHECK(error_rate({""}, {"a b"}, ErrorUnit::word) == 1.0);
  CHECK(error_rate({""}, {"ab"}, ErrorUnit::character) == 1.0);
}

TEST_CASE("error_rate: aggregates over the corpus; errors on empty reference") {
  // 1 char error over 4 reference chars
  CHECK(error_rate({"ab", "cx"}, {"ab", "cd"}, ErrorUnit::character) ==
        doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS(error_rate({"a"}, {""}, ErrorUnit::character));
  CHECK_THROWS(error_rate({"a", "b"}, {"a"}, ErrorUnit::character));
}

TEST_CASE("levenshtein: substitution symmetry and identity") {
  std::vector<std::string> a = {"x", "y", "z"}, b = {"x", "q", "z"};
  CHECK(levenshtein(a, b) == 1);
  CHECK(levenshtein(b, a) == 1);
  CHECK(levenshtein(a, a) == 0);
  CHECK(levenshtein({}, a) == 3);
}
