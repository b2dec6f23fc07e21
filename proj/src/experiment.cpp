#include "ftlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ftlab/config_json.hpp"
#include "ftlab/probe.hpp"
#include "ftlab/report.hpp"
#include "ftlab/svg.hpp"

namespace ftlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void write_ssl_log(const std::string& path, const std::vector<SslLogRow>& log) {
  std::ofstream os(path);
  check(bool(os), "cannot write pretrain log '" + path + "'");
  os << "epoch,split,ssl_loss\n";
  char buf[64];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.ssl_loss);
    os << r.epoch << "," << r.split << "," << buf << "\n";
  }
}

Corpus gen_or_load(const ExperimentConfig& cfg, const std::string& name,
                   const DomainSpec& spec, std::size_t n, std::uint64_t seed) {
  fs::path dir = fs::path(cfg.data.dir) / name;
  fs::path manifest = dir / "manifest.jsonl";
  if (!cfg.data.generate || (fs::exists(manifest) && !cfg.overwrite))
    return load_corpus(manifest.string(), cfg.vocab);
  Corpus c = generate_corpus(spec, cfg.vocab, n, cfg.data.len_min,
                             cfg.data.len_max, seed);
  save_corpus(c, dir.string(), /*overwrite=*/true);
  // reload so training always sees the float32-quantized payloads; a rerun
  // that loads from cache then reproduces byte-identical CSVs
  return load_corpus(manifest.string(), cfg.vocab);
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  check(bool(is), "config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const std::exception& e) {
    check(false, "config: parse error in '" + path + "': " + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("vocab")) cfg.vocab.chars = j.at("vocab").get<std::string>();
    if (j.contains("encoder")) cfg.encoder = j.at("encoder").get<EncoderConfig>();
    if (j.contains("head_hidden")) cfg.head_hidden = j.at("head_hidden").get<std::size_t>();
    if (j.contains("mask")) cfg.mask = j.at("mask").get<MaskSpec>();
    if (j.contains("data")) {
      const json& d = j.at("data");
      cfg.data.dir = d.value("dir", std::string());
      cfg.data.generate = d.value("generate", true);
      cfg.data.pretrain_n = d.value("pretrain_n", cfg.data.pretrain_n);
      cfg.data.pretrain_valid_n = d.value("pretrain_valid_n", cfg.data.pretrain_valid_n);
      cfg.data.ft_train_n = d.value("ft_train_n", cfg.data.ft_train_n);
      cfg.data.ft_valid_n = d.value("ft_valid_n", cfg.data.ft_valid_n);
      cfg.data.test_n = d.value("test_n", cfg.data.test_n);
      cfg.data.probe_n = d.value("probe_n", cfg.data.probe_n);
      cfg.data.len_min = d.value("len_min", cfg.data.len_min);
      cfg.data.len_max = d.value("len_max", cfg.data.len_max);
      cfg.data.seed = d.value("seed", cfg.data.seed);
    }
    if (j.contains("pretrain")) {
      const json& p = j.at("pretrain");
      cfg.pretrain_epochs = p.value("epochs", cfg.pretrain_epochs);
      cfg.pretrain_batch = p.value("batch_size", cfg.pretrain_batch);
      cfg.pretrain_lr = p.value("lr", cfg.pretrain_lr);
      cfg.teacher_decay = p.value("teacher_decay", cfg.teacher_decay);
      cfg.pretrain_seed = p.value("seed", cfg.pretrain_seed);
    }
    if (j.contains("finetune")) {
      const json& f = j.at("finetune");
      cfg.finetune_epochs = f.value("epochs", cfg.finetune_epochs);
      cfg.finetune_batch = f.value("batch_size", cfg.finetune_batch);
      cfg.finetune_lr = f.value("lr", cfg.finetune_lr);
    }
    check(j.contains("strategies"), "config: missing field 'strategies'");
    for (const json& s : j.at("strategies"))
      cfg.strategies.push_back(s.get<StrategyConfig>());
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.fisher_samples = j.value("fisher_samples", cfg.fisher_samples);
    cfg.probe_seed = j.value("probe_seed", cfg.probe_seed);
  } catch (const json::exception& e) {
    check(false, std::string("config: invalid field: ") + e.what());
  }
  if (cfg.data.dir.empty())
    cfg.data.dir = (fs::path(cfg.out_dir) / "data").string();
  return cfg;
}

void validate_experiment(const ExperimentConfig& cfg) {
  check(!cfg.out_dir.empty(), "config: out_dir is empty");
  check(!cfg.seeds.empty(), "config: seeds list is empty");
  check(!cfg.strategies.empty(), "config: strategies list is empty");
  cfg.vocab.validate();
  check(cfg.vocab.chars.size() >= 2, "config: vocab needs >= 2 characters");
  cfg.encoder.validate();
  check(cfg.encoder.d_in > 0, "config: encoder.d_in must be positive");
  for (const StrategyConfig& st : cfg.strategies) {
    st.validate();
    if (st.kind == StrategyKind::lora)
      check(st.rank >= 1 &&
                st.rank <= std::min(cfg.encoder.d_model, cfg.encoder.d_ff),
            "config: strategies[].r exceeds encoder matrix dims");
    if (st.kind == StrategyKind::replay &&
        st.replay_source == ReplaySource::pretrain_corpus)
      check(cfg.data.generate || !cfg.data.dir.empty(),
            "config: strategies[].replay needs a pretrain corpus (data.dir)");
    if (st.kind == StrategyKind::ewc)
      check(cfg.fisher_samples >= 1,
            "config: fisher_samples must be >= 1 for the ewc strategy");
  }
  if (!cfg.data.generate)
    check(fs::exists(fs::path(cfg.data.dir) / "pretrain_train" / "manifest.jsonl"),
          "config: data.generate=false but data.dir has no corpora");
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  const Vocabulary& vocab = cfg.vocab;
  std::size_t half = vocab.chars.size() / 2;
  std::vector<double> pretrain_w(vocab.chars.size(), 0.0);
  std::vector<double> ft_w(vocab.chars.size(), 0.0);
  for (std::size_t i = 0; i < vocab.chars.size(); ++i)
    (i < half ? pretrain_w[i] : ft_w[i]) = 1.0;

  DomainSpec id_pre = DomainSpec::indomain();
  id_pre.d_in = cfg.encoder.d_in;
  id_pre.char_weights = pretrain_w;
  DomainSpec id_ft = id_pre;
  id_ft.char_weights = ft_w;
  DomainSpec ood_ft = DomainSpec::ood();
  ood_ft.d_in = cfg.encoder.d_in;
  ood_ft.char_weights = ft_w;
  DomainSpec ood_pre = DomainSpec::ood();
  ood_pre.d_in = cfg.encoder.d_in;
  ood_pre.char_weights = pretrain_w;

  std::uint64_t s = cfg.data.seed;
  ExperimentData d;
  d.pretrain_train = gen_or_load(cfg, "pretrain_train", id_pre,
                                 cfg.data.pretrain_n, Rng::derive(s, 1));
  d.pretrain_valid = gen_or_load(cfg, "pretrain_valid", id_pre,
                                 cfg.data.pretrain_valid_n, Rng::derive(s, 2));
  d.ft_train = gen_or_load(cfg, "ft_train", id_ft, cfg.data.ft_train_n,
                           Rng::derive(s, 3));
  d.ft_valid = gen_or_load(cfg, "ft_valid", id_ft, cfg.data.ft_valid_n,
                           Rng::derive(s, 4));
  d.test_id = gen_or_load(cfg, "test_id", id_ft, cfg.data.test_n,
                          Rng::derive(s, 5));
  d.test_ood = gen_or_load(cfg, "test_ood", ood_ft, cfg.data.test_n,
                           Rng::derive(s, 6));
  d.probe_id = gen_or_load(cfg, "probe_id", id_pre, cfg.data.probe_n,
                           Rng::derive(s, 7));
  d.probe_ood = gen_or_load(cfg, "probe_ood", ood_pre, cfg.data.probe_n,
                            Rng::derive(s, 8));
  return d;
}

PretrainResult prepare_pretrained(const ExperimentConfig& cfg,
                                  const ExperimentData& data) {
  fs::path dir = fs::path(cfg.out_dir) / "pretrain";
  fs::path theta_path = dir / "theta_star.ckpt";
  fs::path teacher_path = dir / "teacher.ckpt";
  if (fs::exists(theta_path) && fs::exists(teacher_path) && !cfg.overwrite) {
    PretrainResult r;
    r.encoder = Encoder::from_params(cfg.encoder, ParamStore::load(theta_path.string()));
    r.teacher.cfg = cfg.encoder;
    r.teacher.shadow = ParamStore::load(teacher_path.string());
    r.teacher.decay = cfg.teacher_decay;
    return r;
  }
  PretrainConfig pc;
  pc.epochs = cfg.pretrain_epochs;
  pc.batch_size = cfg.pretrain_batch;
  pc.adam.lr = cfg.pretrain_lr;
  pc.mask = cfg.mask;
  pc.teacher_decay = cfg.teacher_decay;
  pc.seed = cfg.pretrain_seed;
  PretrainResult r = pretrain(cfg.encoder, data.pretrain_train,
                              data.pretrain_valid, pc);
  fs::create_directories(dir);
  r.encoder.params.save(theta_path.string());
  r.teacher.shadow.save(teacher_path.string());
  write_ssl_log((dir / "pretrain_log.csv").string(), r.log);
  return r;
}

std::string run_id_for(const StrategyConfig& st, std::uint64_t seed) {
  std::string id = strategy_name(st.kind);
  switch (st.kind) {
    case StrategyKind::ewc: id += "_lam" + trim_num(st.lambda); break;
    case StrategyKind::lora: id += "_r" + std::to_string(st.rank); break;
    case StrategyKind::adapters: id += "_m" + std::to_string(st.bottleneck); break;
    case StrategyKind::replay:
      id += "_pR" + trim_num(st.p_replay);
      id += st.replay_source == ReplaySource::finetune_corpus ? "_auto" : "_pre";
      break;
    case StrategyKind::two_phase:
      id += "_fe" + std::to_string(st.freeze_epochs);
      break;
    default: break;
  }
  return id + "_s" + std::to_string(seed);
}

std::vector<RunOutputs> run_experiment(const ExperimentConfig& cfg) {
  validate_experiment(cfg);
  ExperimentData data = prepare_data(cfg);
  PretrainResult pre = prepare_pretrained(cfg, data);

  bool needs_fisher = std::any_of(
      cfg.strategies.begin(), cfg.strategies.end(),
      [](const StrategyConfig& s) { return s.kind == StrategyKind::ewc; });
  std::optional<FisherInfo> fisher;
  if (needs_fisher)
    fisher = estimate_fisher(pre.encoder, pre.teacher, data.pretrain_valid,
                             cfg.fisher_samples, cfg.mask,
                             Rng::derive(cfg.pretrain_seed, 0xF1));

  HeadConfig head;
  head.d_in = cfg.encoder.d_model;
  head.hidden = cfg.head_hidden;
  head.n_out = cfg.vocab.size_with_blank();

  std::vector<RunOutputs> outputs;
  for (const StrategyConfig& st : cfg.strategies) {
    for (std::uint64_t seed : cfg.seeds) {
      std::string run_id = run_id_for(st, seed);
      std::string run_dir = (fs::path(cfg.out_dir) / "runs" / run_id).string();
      FinetuneConfig fc;
      fc.strategy = st;
      fc.head = head;
      fc.epochs = cfg.finetune_epochs;
      fc.batch_size = cfg.finetune_batch;
      fc.adam.lr = cfg.finetune_lr;
      fc.replay_mask = cfg.mask;
      fc.seed = seed;
      fc.run_dir = run_dir;
      fc.run_id = run_id;

      FinetuneResult res =
          finetune(pre.encoder, pre.teacher,
                   st.kind == StrategyKind::ewc ? fisher : std::nullopt,
                   data.ft_train, data.ft_valid, &data.pretrain_train,
                   cfg.vocab, fc);

      // final test-set metrics, appended to the run's CSV
      bool lw = st.kind == StrategyKind::frozen;
      for (const auto& [split, corpus] :
           {std::pair<std::string, const Corpus*>{"test_id", &data.test_id},
            std::pair<std::string, const Corpus*>{"test_ood", &data.test_ood}}) {
        EvalResult ev = evaluate(res.model, head, cfg.vocab, *corpus, lw);
        res.metrics.push_back({run_id, strategy_name(st.kind), seed,
                               cfg.finetune_epochs, split, "cer", ev.cer});
        res.metrics.push_back({run_id, strategy_name(st.kind), seed,
                               cfg.finetune_epochs, split, "wer", ev.wer});
      }
      write_metrics_csv((fs::path(run_dir) / "metrics.csv").string(),
                        res.metrics);

      auto reports = probe_series(
          run_dir, pre.teacher,
          {{"probe_id", &data.probe_id}, {"probe_ood", &data.probe_ood}},
          cfg.mask, cfg.probe_seed);
      write_probe_csv((fs::path(run_dir) / "probe.csv").string(), reports);
      write_probe_svg((fs::path(run_dir) / "probe.svg").string(), reports);

      outputs.push_back({run_dir, std::move(res)});
    }
  }
  return outputs;
}

SweepSpec load_sweep_spec(const std::string& path) {
  std::ifstream is(path);
  check(bool(is), "sweep: cannot open '" + path + "'");
  json j = json::parse(is);
  check(j.contains("base"), "sweep: missing 'base' experiment config");
  SweepSpec spec;
  {
    // base may be inline or a path to a config file
    if (j.at("base").is_string()) {
      spec.base = load_experiment_config(j.at("base").get<std::string>());
    } else {
      fs::path tmp = fs::temp_directory_path() / "ftlab_sweep_base.json";
      std::ofstream os(tmp);
      os << j.at("base").dump() << "\n";
      os.close();
      spec.base = load_experiment_config(tmp.string());
    }
  }
  spec.hyperparameter = j.at("hyperparameter").get<std::string>();
  spec.values = j.at("values").get<std::vector<double>>();
  check(!spec.values.empty(), "sweep: empty value grid");
  check(spec.hyperparameter == "r" || spec.hyperparameter == "lambda" ||
            spec.hyperparameter == "p_R",
        "sweep: hyperparameter must be one of r, lambda, p_R");
  return spec;
}

void run_sweep(const SweepSpec& spec) {
  check(spec.base.strategies.size() == 1,
        "sweep: base config must hold exactly the swept strategy");
  StrategyConfig st = spec.base.strategies[0];
  if (spec.hyperparameter == "r")
    check(st.kind == StrategyKind::lora, "sweep: 'r' requires the lora strategy");
  if (spec.hyperparameter == "lambda")
    check(st.kind == StrategyKind::ewc, "sweep: 'lambda' requires the ewc strategy");
  if (spec.hyperparameter == "p_R")
    check(st.kind == StrategyKind::replay,
          "sweep: 'p_R' requires the replay strategy");

  // baseline full fine-tuning runs give the Fig. 1-style reference line
  std::vector<std::vector<std::string>> agg_rows;
  ExperimentConfig base_cfg = spec.base;
  base_cfg.strategies = {StrategyConfig{StrategyKind::full_ft}};
  auto baseline = run_experiment(base_cfg);

  auto collect = [&](const std::vector<RunOutputs>& runs, double value,
                     std::vector<double>& id_cer, std::vector<double>& ood_cer) {
    for (const RunOutputs& ro : runs)
      for (const MetricRow& r : ro.result.metrics) {
        if (r.metric != "cer") continue;
        if (r.split != "test_id" && r.split != "test_ood") continue;
        agg_rows.push_back({r.run_id, spec.hyperparameter, trim_num(value),
                            r.split, r.metric, trim_num(r.value)});
        (r.split == "test_id" ? id_cer : ood_cer).push_back(r.value);
      }
  };

  std::vector<double> base_id, base_ood;
  collect(baseline, std::nan(""), base_id, base_ood);

  SvgChart chart;
  chart.title = "Final CER vs " + spec.hyperparameter;
  chart.x_label = spec.hyperparameter;
  chart.y_label = "CER";
  SvgSeries id_series{"in-domain", {}};
  SvgSeries ood_series{"OOD", {}};

  for (double v : spec.values) {
    ExperimentConfig cfg = spec.base;
    StrategyConfig sv = st;
    if (spec.hyperparameter == "r") {
      check(v >= 1 && v <= double(std::min(cfg.encoder.d_model, cfg.encoder.d_ff)),
            "sweep: grid value r=" + trim_num(v) + " exceeds encoder dims");
      sv.rank = std::size_t(v);
    } else if (spec.hyperparameter == "lambda") {
      check(v >= 0, "sweep: lambda grid value must be >= 0");
      sv.lambda = v;
    } else {
      check(v >= 0 && v <= 1, "sweep: p_R grid value must be in [0,1]");
      sv.p_replay = v;
    }
    cfg.strategies = {sv};
    auto runs = run_experiment(cfg);
    std::vector<double> id_cer, ood_cer;
    collect(runs, v, id_cer, ood_cer);
    auto mean = [](const std::vector<double>& xs) {
      double m = 0.0;
      for (double x : xs) m += x;
      return m / double(xs.size());
    };
    id_series.points.emplace_back(v, mean(id_cer));
    ood_series.points.emplace_back(v, mean(ood_cer));
  }
  chart.series = {id_series, ood_series};
  double bm = 0.0;
  for (double x : base_id) bm += x;
  if (!base_id.empty())
    chart.h_lines.push_back({"full_ft (in-domain)", bm / double(base_id.size())});

  fs::path out = fs::path(spec.base.out_dir) / "sweep";
  fs::create_directories(out);
  std::ofstream os(out / ("sweep_" + spec.hyperparameter + ".csv"));
  check(bool(os), "sweep: cannot write aggregate CSV");
  os << "run_id,hyperparameter,value,split,metric,metric_value\n";
  for (const auto& row : agg_rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      os << row[i] << (i + 1 < row.size() ? "," : "");
    os << "\n";
  }
  write_svg_chart((out / ("sweep_" + spec.hyperparameter + ".svg")).string(),
                  chart);
}

}  // namespace ftlab
