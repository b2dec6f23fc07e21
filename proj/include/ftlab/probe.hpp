#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftlab/data.hpp"
#include "ftlab/encoder.hpp"
#include "ftlab/ssl.hpp"

namespace ftlab {

// Per-checkpoint SSL-loss series for one run and one probe set. Masks are
// fixed per utterance (derived from the probe seed and utterance id), so the
// series is comparable across epochs and strategies.
struct ProbeReport {
  std::string run_id;
  std::string probe_set;
  std::vector<std::pair<std::size_t, double>> series;  // (epoch, ssl_loss)
  std::uint64_t mask_seed = 0;
};

// Mean SSL loss of one checkpoint (active adaptation attachments included)
// against the frozen pretraining teacher. Pure and read-only.
double probe_checkpoint(const Encoder& checkpoint, const TeacherState& teacher,
                        const Corpus& probe_corpus, const MaskSpec& mask,
                        std::uint64_t probe_seed);

// Probes every epoch_N.ckpt under run_dir on each named probe corpus.
// Reads run_meta.json for the encoder/adaptation layout.
std::vector<ProbeReport> probe_series(
    const std::string& run_dir, const TeacherState& teacher,
    const std::vector<std::pair<std::string, const Corpus*>>& probe_corpora,
    const MaskSpec& mask, std::uint64_t probe_seed);

void write_probe_csv(const std::string& path,
                     const std::vector<ProbeReport>& reports);

// One line per report: epoch on x, ssl_loss on y.
void write_probe_svg(const std::string& path,
                     const std::vector<ProbeReport>& reports);

}  // namespace ftlab
