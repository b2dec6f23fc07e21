#include "ftlab/probe.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ftlab/config_json.hpp"
#include "ftlab/svg.hpp"

namespace ftlab {

namespace fs = std::filesystem;

double probe_checkpoint(const Encoder& checkpoint, const TeacherState& teacher,
                        const Corpus& probe_corpus, const MaskSpec& mask,
                        std::uint64_t probe_seed) {
  check(!probe_corpus.empty(), "probe_checkpoint: empty probe corpus");
  return ssl_corpus_loss(checkpoint, teacher, probe_corpus, mask, probe_seed);
}

std::vector<ProbeReport> probe_series(
    const std::string& run_dir, const TeacherState& teacher,
    const std::vector<std::pair<std::string, const Corpus*>>& probe_corpora,
    const MaskSpec& mask, std::uint64_t probe_seed) {
  fs::path dir(run_dir);
  std::ifstream meta_is(dir / "run_meta.json");
  check(bool(meta_is), "probe_series: missing run_meta.json in " + run_dir);
  nlohmann::json meta = nlohmann::json::parse(meta_is);
  EncoderConfig ecfg = meta.at("encoder").get<EncoderConfig>();
  StrategyConfig st = meta.at("strategy").get<StrategyConfig>();
  std::string run_id = meta.at("run_id").get<std::string>();

  AdaptationSpec adapt;
  if (st.kind == StrategyKind::lora)
    adapt = {AdaptKind::lora, st.rank, st.bottleneck};
  if (st.kind == StrategyKind::adapters)
    adapt = {AdaptKind::adapter, st.rank, st.bottleneck};

  // epoch checkpoints in increasing epoch order
  std::vector<std::pair<std::size_t, std::string>> ckpts;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) == 0 && name.size() > 11 &&
        name.substr(name.size() - 5) == ".ckpt")
      ckpts.emplace_back(std::stoul(name.substr(6, name.size() - 11)),
                         entry.path().string());
  }
  check(!ckpts.empty(), "probe_series: no checkpoints in " + run_dir);
  std::sort(ckpts.begin(), ckpts.end());

  std::vector<ProbeReport> reports;
  for (const auto& [set_name, corpus] : probe_corpora) {
    ProbeReport rep;
    rep.run_id = run_id;
    rep.probe_set = set_name;
    rep.mask_seed = probe_seed;
    for (const auto& [epoch, path] : ckpts) {
      Encoder model = Encoder::from_params(ecfg, ParamStore::load(path), adapt);
      rep.series.emplace_back(
          epoch, probe_checkpoint(model, teacher, *corpus, mask, probe_seed));
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

void write_probe_csv(const std::string& path,
                     const std::vector<ProbeReport>& reports) {
  std::ofstream os(path);
  check(bool(os), "cannot write probe CSV '" + path + "'");
  os << "run_id,probe_set,epoch,ssl_loss\n";
  char buf[64];
  for (const ProbeReport& r : reports)
    for (const auto& [epoch, loss] : r.series) {
      std::snprintf(buf, sizeof(buf), "%.17g", loss);
      os << r.run_id << "," << r.probe_set << "," << epoch << "," << buf << "\n";
    }
}

void write_probe_svg(const std::string& path,
                     const std::vector<ProbeReport>& reports) {
  SvgChart chart;
  chart.title = "Pretraining-task loss across fine-tuning checkpoints";
  chart.x_label = "fine-tuning epoch";
  chart.y_label = "SSL loss";
  for (const ProbeReport& r : reports) {
    SvgSeries s;
    s.label = r.run_id + " / " + r.probe_set;
    for (const auto& [epoch, loss] : r.series)
      s.points.emplace_back(double(epoch), loss);
    chart.series.push_back(std::move(s));
  }
  write_svg_chart(path, chart);
}

}  // namespace ftlab
