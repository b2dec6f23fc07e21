#include "ftlab/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ftlab/rng.hpp"

namespace ftlab {

namespace fs = std::filesystem;
using nlohmann::json;

DomainSpec DomainSpec::indomain() { return DomainSpec{}; }

DomainSpec DomainSpec::ood() {
  DomainSpec s;
  s.name = "ood";
  s.noise_sigma = 0.15;  // 3x the in-domain noise
  s.channel.assign(s.d_in, 1.0);
  // mild per-dim channel tilt
  for (std::size_t i = 0; i < s.d_in; ++i)
    s.channel[i] = 0.6 + 0.8 * double(i) / double(s.d_in - 1);
  s.speaker_sigma = 0.2;
  return s;
}

std::vector<Tensor> build_prototypes(const DomainSpec& spec,
                                     const Vocabulary& vocab) {
  check(!vocab.chars.empty(), "build_prototypes: empty vocabulary");
  check(spec.proto_min >= 1 && spec.proto_max >= spec.proto_min,
        "build_prototypes: bad prototype length range");
  Rng rng(Rng::derive(spec.seed, 0xA11CE));
  std::vector<Tensor> protos;
  std::vector<std::vector<double>> means;
  for (std::size_t ci = 0; ci < vocab.chars.size(); ++ci) {
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      std::size_t len =
          spec.proto_min + rng.below(spec.proto_max - spec.proto_min + 1);
      Tensor p({len, spec.d_in});
      // base level of 1.0 (think log-energy floor): gives every dimension a
      // nonzero mean so multiplicative channel shifts are observable
      for (double& v : p.values) v = 1.0 + rng.normal();
      std::vector<double> mean(spec.d_in, 0.0);
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t d = 0; d < spec.d_in; ++d)
          mean[d] += p.at(t, d) / double(len);
      ok = true;
      for (const auto& m : means) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < spec.d_in; ++d) {
          double diff = mean[d] - m[d];
          d2 += diff * diff;
        }
        if (std::sqrt(d2) < spec.proto_margin) {
          ok = false;
          break;
        }
      }
      if (ok) {
        protos.push_back(std::move(p));
        means.push_back(std::move(mean));
      }
    }
    check(ok, "build_prototypes: degenerate dictionary, margin unreachable");
  }
  return protos;
}

namespace {

Tensor tempo_stretch(const Tensor& proto, double tempo) {
  std::size_t len = proto.rows();
  auto out_len = std::size_t(std::llround(double(len) * tempo));
  if (out_len < 1) out_len = 1;
  Tensor out({out_len, proto.cols()});
  for (std::size_t j = 0; j < out_len; ++j) {
    std::size_t src = j * len / out_len;
    for (std::size_t d = 0; d < proto.cols(); ++d)
      out.at(j, d) = proto.at(src, d);
  }
  return out;
}

std::size_t sample_weighted(Rng& rng, const std::vector<double>& w) {
  double total = 0.0;
  for (double v : w) total += v;
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return w.size() - 1;
}

}  // namespace

Corpus generate_corpus(const DomainSpec& spec, const Vocabulary& vocab,
                       std::size_t n_utterances, std::size_t len_min,
                       std::size_t len_max, std::uint64_t rng_seed) {
  check(n_utterances >= 1, "generate_corpus: n must be >= 1");
  check(len_min >= 1 && len_max >= len_min, "generate_corpus: bad length range");
  vocab.validate();
  std::vector<Tensor> protos = build_prototypes(spec, vocab);
  std::vector<double> weights = spec.char_weights;
  if (weights.empty()) weights.assign(vocab.chars.size(), 1.0);
  check(weights.size() == vocab.chars.size(),
        "generate_corpus: char_weights size mismatch");

  Corpus corpus;
  corpus.utts.reserve(n_utterances);
  for (std::size_t u = 0; u < n_utterances; ++u) {
    Rng rng(Rng::derive(rng_seed, u));
    std::size_t len = len_min + rng.below(len_max - len_min + 1);
    // adjacent-distinct transcript: keeps every utterance CTC-alignable
    std::string text;
    std::size_t prev = vocab.chars.size();
    for (std::size_t i = 0; i < len; ++i) {
      std::size_t c = sample_weighted(rng, weights);
      while (c == prev && vocab.chars.size() > 1) c = sample_weighted(rng, weights);
      text.push_back(vocab.chars[c]);
      prev = c;
    }
    double tempo = rng.uniform(spec.tempo_min, spec.tempo_max);
    std::vector<Tensor> parts;
    std::size_t total = 0;
    for (char c : text) {
      Tensor s = tempo_stretch(protos[vocab.index_of(c) - 1], tempo);
      total += s.rows();
      parts.push_back(std::move(s));
    }
    Tensor feat({total, spec.d_in});
    std::size_t row = 0;
    for (const Tensor& p : parts) {
      for (std::size_t t = 0; t < p.rows(); ++t, ++row)
        for (std::size_t d = 0; d < spec.d_in; ++d)
          feat.at(row, d) = p.at(t, d);
    }
    std::vector<double> offset(spec.d_in, 0.0);
    for (double& v : offset) v = rng.normal(0.0, spec.speaker_sigma);
    for (std::size_t t = 0; t < feat.rows(); ++t)
      for (std::size_t d = 0; d < spec.d_in; ++d) {
        double v = feat.at(t, d) + offset[d];
        if (!spec.channel.empty()) v *= spec.channel[d];
        if (spec.noise_sigma > 0.0) v += rng.normal(0.0, spec.noise_sigma);
        feat.at(t, d) = v;
      }
    check(feat.all_finite(), "generate_corpus: non-finite features");
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s-%06zu", spec.name.c_str(), u);
    corpus.utts.push_back(Utterance{idbuf, std::move(feat), text, spec.name});
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& directory,
                 bool overwrite) {
  fs::path dir(directory);
  if (fs::exists(dir)) {
    check(overwrite || fs::is_empty(dir),
          "save_corpus: directory '" + directory +
              "' is not empty (pass overwrite to replace)");
  } else {
    fs::create_directories(dir);
  }
  std::ofstream manifest(dir / "manifest.jsonl");
  check(bool(manifest), "save_corpus: cannot write manifest");
  for (const Utterance& u : corpus.utts) {
    std::string fname = u.id + ".f32";
    std::ofstream payload(dir / fname, std::ios::binary);
    check(bool(payload), "save_corpus: cannot write payload for " + u.id);
    for (double v : u.features.values) {
      float f = float(v);
      char buf[4];
      std::memcpy(buf, &f, 4);
      payload.write(buf, 4);
    }
    json rec = {{"id", u.id},
                {"path", fname},
                {"frames", u.features.rows()},
                {"dim", u.features.cols()},
                {"text", u.text},
                {"domain", u.domain}};
    manifest << rec.dump() << "\n";
  }
  check(bool(manifest), "save_corpus: manifest write failure");
}

Corpus load_corpus(const std::string& manifest_path, const Vocabulary& vocab) {
  std::ifstream manifest(manifest_path);
  check(bool(manifest), "load_corpus: cannot open '" + manifest_path + "'");
  fs::path dir = fs::path(manifest_path).parent_path();
  Corpus corpus;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Utterance u;
    u.id = rec.at("id").get<std::string>();
    u.text = rec.at("text").get<std::string>();
    u.domain = rec.at("domain").get<std::string>();
    std::size_t frames = rec.at("frames").get<std::size_t>();
    std::size_t dim = rec.at("dim").get<std::size_t>();
    check(frames >= 1, "load_corpus: zero frames for " + u.id);
    check(!u.text.empty(), "load_corpus: empty transcript for " + u.id);
    for (char c : u.text) (void)vocab.index_of(c);  // throws on unknown

    fs::path p = dir / rec.at("path").get<std::string>();
    std::ifstream payload(p, std::ios::binary);
    check(bool(payload), "load_corpus: missing payload for " + u.id);
    payload.seekg(0, std::ios::end);
    std::size_t bytes = std::size_t(payload.tellg());
    check(bytes == frames * dim * 4,
          "load_corpus: payload size mismatch for " + u.id + " (" +
              std::to_string(bytes) + " bytes, expected " +
              std::to_string(frames * dim * 4) + ")");
    payload.seekg(0);
    u.features = Tensor({frames, dim});
    for (double& v : u.features.values) {
      char buf[4];
      payload.read(buf, 4);
      float f;
      std::memcpy(&f, buf, 4);
      v = double(f);
    }
    check(u.features.all_finite(), "load_corpus: non-finite features in " + u.id);
    corpus.utts.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace ftlab
