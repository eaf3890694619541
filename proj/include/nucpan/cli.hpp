#pragma once

// Batch workflows behind the `nucpan` command line. Each command returns the
// process exit code: 0 iff every file was processed. Per-file failures are
// reported on `err` in input order.
//
// Bundle directory layout (written by `synth` and `decode`, read by `eval`):
//   <dir>/instances/<id>.png     16-bit instance map
//   <dir>/classes/<id>.png       8-bit class map
//   <dir>/directions/<id>.png    8-bit direction map (synth only)
//   <dir>/tensors/<id>_seg.f32   one-hot 7-channel tensor (synth --tensors)
//   <dir>/tensors/<id>_dir.f32   one-hot N-channel tensor (synth --tensors)
//   <dir>/counts.csv             per-image class counts

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nucpan/losses.hpp"
#include "nucpan/metrics.hpp"
#include "nucpan/synth.hpp"

namespace nucpan::cli {

namespace fs = std::filesystem;

struct EncodeOptions {
  std::vector<fs::path> inputs;  // files or directories of instance-map PNGs
  fs::path out;                  // directory, or a .png file for a single input
  int directions = 4;
  int jobs = 1;
};

struct DecodeOptions {
  fs::path seg;  // class-map PNG or 7-channel tensor; or a directory of them
  fs::path dir;  // direction-map PNG or N-channel tensor; or a directory of them
  fs::path out;  // bundle directory
  int directions = 4;
  int connectivity = 4;
  int jobs = 1;
};

struct EvalOptions {
  fs::path gt;
  fs::path pred;
  std::optional<fs::path> out;  // stdout when empty
  metrics::PqAggregation aggregation = metrics::PqAggregation::Pooled;
  metrics::R2Mode r2_mode = metrics::R2Mode::PerClassMean;
  int jobs = 1;
};

struct CountsOptions {
  fs::path input;
  std::optional<fs::path> out;
};

struct SynthOptions {
  fs::path out;
  int count = 1;
  synth::SynthConfig config;
  bool write_tensors = false;
  int jobs = 1;
};

struct RenderOptions {
  fs::path instances;
  fs::path classes;
  fs::path out;
};

struct LossOptions {
  fs::path seg_pred;
  fs::path dir_pred;
  fs::path classes;
  fs::path directions;
  fs::path counts_pred;
  fs::path counts_gt;
  std::optional<std::string> image;  // row to use from the counts CSVs; first row by default
  losses::LossWeights weights;
  std::optional<fs::path> out;
};

int cmd_encode(const EncodeOptions& opts, std::ostream& err);
int cmd_decode(const DecodeOptions& opts, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);
int cmd_counts(const CountsOptions& opts, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthOptions& opts, std::ostream& err);
int cmd_render(const RenderOptions& opts, std::ostream& err);
int cmd_loss(const LossOptions& opts, std::ostream& out, std::ostream& err);

/// Parses "a,b,c,d" into loss weights.
losses::LossWeights parse_weights(const std::string& text);

/// Image id of a map or tensor file: the file stem with any trailing
/// "_seg" / "_dir" suffix removed.
std::string image_id(const fs::path& path);

}  // namespace nucpan::cli
