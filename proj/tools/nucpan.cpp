// nucpan: batch front end for direction-map encoding, instance
// reconstruction, evaluation, count postprocessing, synthesis, rendering and
// reference losses.

#include <iostream>

#include "CLI11.hpp"
#include "nucpan/cli.hpp"

namespace {

using namespace nucpan;

void add_jobs(CLI::App* cmd, int& jobs) {
  cmd->add_option("--jobs,-j", jobs, "Images processed in parallel")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nuclei panoptic postprocessing and evaluation"};
  app.require_subcommand(1);

  cli::EncodeOptions encode;
  auto* encode_cmd = app.add_subcommand("encode", "Instance maps -> direction maps");
  encode_cmd->add_option("inputs", encode.inputs, "Instance-map PNGs or directories")->required();
  encode_cmd->add_option("--out,-o", encode.out, "Output directory (or .png for one input)")->required();
  encode_cmd->add_option("--directions", encode.directions, "Number of direction classes");
  add_jobs(encode_cmd, encode.jobs);

  cli::DecodeOptions decode;
  auto* decode_cmd = app.add_subcommand("decode", "Segmentation + direction outputs -> instances, classes, counts");
  decode_cmd->add_option("--seg", decode.seg, "Class-map PNG or 7-channel tensor (file or directory)")->required();
  decode_cmd->add_option("--dir", decode.dir, "Direction-map PNG or N-channel tensor (file or directory)")->required();
  decode_cmd->add_option("--out,-o", decode.out, "Output bundle directory")->required();
  decode_cmd->add_option("--directions", decode.directions, "Number of direction classes");
  decode_cmd->add_option("--connectivity", decode.connectivity, "4 or 8")->check(CLI::IsMember({4, 8}));
  add_jobs(decode_cmd, decode.jobs);

  cli::EvalOptions eval;
  std::string aggregation = "pooled";
  std::string r2_mode = "per-class";
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "mPQ and multi-class R² of a prediction bundle");
  eval_cmd->add_option("--gt", eval.gt, "Ground-truth bundle directory")->required();
  eval_cmd->add_option("--pred", eval.pred, "Prediction bundle directory")->required();
  eval_cmd->add_option("--out,-o", eval_out, "Report path (stdout if omitted)");
  eval_cmd->add_option("--aggregation", aggregation, "pooled | per-image")
      ->check(CLI::IsMember({"pooled", "per-image"}));
  eval_cmd->add_option("--r2", r2_mode, "per-class | pooled")->check(CLI::IsMember({"per-class", "pooled"}));
  add_jobs(eval_cmd, eval.jobs);

  cli::CountsOptions counts;
  std::string counts_out;
  auto* counts_cmd = app.add_subcommand("counts", "Clamp negatives and round raw count predictions");
  counts_cmd->add_option("input", counts.input, "Raw counts CSV")->required();
  counts_cmd->add_option("--out,-o", counts_out, "Output CSV (stdout if omitted)");

  cli::SynthOptions synth;
  std::string synth_config;
  std::uint64_t seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic ground-truth bundles");
  synth_cmd->add_option("--out,-o", synth.out, "Output bundle directory")->required();
  synth_cmd->add_option("--count,-n", synth.count, "Number of images");
  synth_cmd->add_option("--config", synth_config, "JSON config file")->check(CLI::ExistingFile);
  synth_cmd->add_option("--seed", seed, "Base seed");
  auto* h_opt = synth_cmd->add_option("--height", synth.config.height);
  auto* w_opt = synth_cmd->add_option("--width", synth.config.width);
  auto* n_opt = synth_cmd->add_option("--nuclei", synth.config.n_nuclei);
  auto* t_opt = synth_cmd->add_flag("--touching", synth.config.allow_touching, "Allow nuclei to share boundaries");
  auto* d_opt = synth_cmd->add_option("--directions", synth.config.n_directions);
  synth_cmd->add_flag("--tensors", synth.write_tensors, "Also write one-hot probability tensors");
  add_jobs(synth_cmd, synth.jobs);

  cli::RenderOptions render;
  auto* render_cmd = app.add_subcommand("render", "Colour overlay of instance and class maps");
  render_cmd->add_option("--instances", render.instances)->required();
  render_cmd->add_option("--classes", render.classes)->required();
  render_cmd->add_option("--out,-o", render.out)->required();

  cli::LossOptions loss;
  std::string weights = "1.0,4.0,2.0,0.005";
  std::string loss_out;
  std::string loss_image;
  auto* loss_cmd = app.add_subcommand("loss", "Reference values of the four training loss terms");
  loss_cmd->add_option("--seg-pred", loss.seg_pred, "7-channel probability tensor")->required();
  loss_cmd->add_option("--dir-pred", loss.dir_pred, "N-channel probability tensor")->required();
  loss_cmd->add_option("--classes", loss.classes, "Ground-truth class map")->required();
  loss_cmd->add_option("--directions-gt", loss.directions, "Ground-truth direction map")->required();
  loss_cmd->add_option("--counts-pred", loss.counts_pred, "Predicted counts CSV")->required();
  loss_cmd->add_option("--counts-gt", loss.counts_gt, "True counts CSV")->required();
  loss_cmd->add_option("--image", loss_image, "Counts row to use (default: first)");
  loss_cmd->add_option("--weights", weights, "ce,dice,dir,l2 weights");
  loss_cmd->add_option("--out,-o", loss_out, "Report path (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*encode_cmd) return cli::cmd_encode(encode, std::cerr);
    if (*decode_cmd) return cli::cmd_decode(decode, std::cerr);
    if (*eval_cmd) {
      eval.aggregation = aggregation == "pooled" ? metrics::PqAggregation::Pooled
                                                 : metrics::PqAggregation::PerImage;
      eval.r2_mode = r2_mode == "pooled" ? metrics::R2Mode::Pooled : metrics::R2Mode::PerClassMean;
      if (!eval_out.empty()) eval.out = eval_out;
      return cli::cmd_eval(eval, std::cout, std::cerr);
    }
    if (*counts_cmd) {
      if (!counts_out.empty()) counts.out = counts_out;
      return cli::cmd_counts(counts, std::cout, std::cerr);
    }
    if (*synth_cmd) {
      if (!synth_config.empty()) {
        // Explicit flags win over the file.
        synth::SynthConfig overrides = synth.config;
        std::ifstream in(synth_config);
        synth.config = nlohmann::json::parse(in).get<synth::SynthConfig>();
        if (*h_opt) synth.config.height = overrides.height;
        if (*w_opt) synth.config.width = overrides.width;
        if (*n_opt) synth.config.n_nuclei = overrides.n_nuclei;
        if (*t_opt) synth.config.allow_touching = overrides.allow_touching;
        if (*d_opt) synth.config.n_directions = overrides.n_directions;
      }
      if (synth_cmd->count("--seed") > 0 || synth_config.empty()) synth.config.seed = seed;
      return cli::cmd_synth(synth, std::cerr);
    }
    if (*render_cmd) return cli::cmd_render(render, std::cerr);
    if (*loss_cmd) {
      loss.weights = cli::parse_weights(weights);
      if (!loss_image.empty()) loss.image = loss_image;
      if (!loss_out.empty()) loss.out = loss_out;
      return cli::cmd_loss(loss, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
