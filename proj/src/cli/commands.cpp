#include "nucpan/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "nucpan/dircodec.hpp"
#include "nucpan/reconstruct.hpp"
#include "nucpan/render.hpp"
#include "nucpan/tensorio.hpp"

namespace nucpan::cli {

namespace {

void check_jobs(int jobs) {
  if (jobs < 1) throw Error("--jobs must be at least 1");
}

bool has_ext(const fs::path& p, std::string_view ext) { return p.extension() == ext; }

/// Map/tensor files of a directory, sorted by name. Tensor sidecars excluded.
std::vector<fs::path> list_inputs(const fs::path& dir, bool include_tensors) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (has_ext(p, ".png") || (include_tensors && has_ext(p, ".f32"))) files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Runs `work(i)` for i in [0, n) on `jobs` threads and reports failures in
/// index order. Returns the number of failures.
template <typename Work>
std::size_t run_batch(std::size_t n, int jobs, const std::vector<std::string>& names,
                      std::ostream& err, Work&& work) {
  std::vector<std::string> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      work(static_cast<std::size_t>(i));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  std::size_t failures = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i].empty()) continue;
    ++failures;
    err << "error: " << names[i] << ": " << errors[i] << '\n';
  }
  return failures;
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Tells every kernel how many threads it may use. Image-level loops nest
// inside, where kernels then run single-threaded.
void set_threads(int jobs) { omp_set_num_threads(jobs); }

ProbTensor one_hot(const Grid<std::uint8_t>& labels, int channels, std::uint8_t background,
                   int background_channel) {
  ProbTensor t(labels.height(), labels.width(), channels, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int ch = labels[i] == background ? background_channel : labels[i];
    if (ch >= 0) t.pixel(i)[ch] = 1.0;
  }
  return t;
}

}  // namespace

std::string image_id(const fs::path& path) {
  std::string stem = path.stem().string();
  for (std::string_view suffix : {"_seg", "_dir"}) {
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
      stem.resize(stem.size() - suffix.size());
      break;
    }
  }
  return stem;
}

losses::LossWeights parse_weights(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("--weights: cannot parse '" + item + "'");
    }
  }
  if (values.size() != 4) throw Error("--weights expects four comma-separated values");
  losses::LossWeights w{values[0], values[1], values[2], values[3]};
  w.validate();
  return w;
}

// ---------------------------------------------------------------------------

int cmd_encode(const EncodeOptions& opts, std::ostream& err) {
  check_jobs(opts.jobs);
  set_threads(opts.jobs);
  const dircodec::DirectionConfig config{opts.directions, 0.0};
  config.validate();

  std::vector<fs::path> files;
  for (const fs::path& in : opts.inputs) {
    if (fs::is_directory(in)) {
      const auto listed = list_inputs(in, false);
      files.insert(files.end(), listed.begin(), listed.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw Error("encode: no input files");

  const bool single_file_out = files.size() == 1 && has_ext(opts.out, ".png");
  if (!single_file_out) fs::create_directories(opts.out);
  std::set<std::string> seen;
  for (const fs::path& f : files) {
    if (!single_file_out && !seen.insert(f.filename().string()).second) {
      throw Error("encode: duplicate output name " + f.filename().string());
    }
  }

  std::vector<std::string> names;
  for (const fs::path& f : files) names.push_back(f.string());
  const std::size_t failures = run_batch(files.size(), opts.jobs, names, err, [&](std::size_t i) {
    const InstanceMap instances = io::read_instance_map(files[i]);
    const DirectionMap directions = dircodec::encode_direction_map(instances, config);
    io::write_label_map(directions, single_file_out ? opts.out : opts.out / files[i].filename());
  });
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

int cmd_decode(const DecodeOptions& opts, std::ostream& err) {
  check_jobs(opts.jobs);
  set_threads(opts.jobs);
  const reconstruct::ReconstructionConfig config{connectivity_from_int(opts.connectivity),
                                                 opts.directions};

  struct Job {
    std::string id;
    fs::path seg;
    fs::path dir;
  };
  std::vector<Job> jobs;
  if (fs::is_directory(opts.seg) || fs::is_directory(opts.dir)) {
    if (!fs::is_directory(opts.seg) || !fs::is_directory(opts.dir)) {
      throw Error("decode: --seg and --dir must both be files or both be directories");
    }
    std::map<std::string, fs::path> seg_files, dir_files;
    // Tensors for both heads may share one directory; the suffix decides.
    for (const auto& p : list_inputs(opts.seg, true)) {
      if (p.stem().string().ends_with("_dir")) continue;
      if (!seg_files.emplace(image_id(p), p).second) throw Error("duplicate image id " + image_id(p));
    }
    for (const auto& p : list_inputs(opts.dir, true)) {
      if (p.stem().string().ends_with("_seg")) continue;
      if (!dir_files.emplace(image_id(p), p).second) throw Error("duplicate image id " + image_id(p));
    }
    std::ostringstream unmatched;
    for (const auto& [id, p] : seg_files) {
      if (!dir_files.count(id)) unmatched << ' ' << p.string();
    }
    for (const auto& [id, p] : dir_files) {
      if (!seg_files.count(id)) unmatched << ' ' << p.string();
    }
    if (!unmatched.str().empty()) throw Error("decode: unpaired inputs:" + unmatched.str());
    for (const auto& [id, p] : seg_files) jobs.push_back({id, p, dir_files.at(id)});
  } else {
    jobs.push_back({image_id(opts.seg), opts.seg, opts.dir});
  }
  if (jobs.empty()) throw Error("decode: no inputs");

  std::vector<io::CountRow> rows(jobs.size());
  std::vector<char> ok(jobs.size(), 0);
  std::vector<std::string> names;
  for (const Job& j : jobs) names.push_back(j.seg.string());

  const std::size_t failures = run_batch(jobs.size(), opts.jobs, names, err, [&](std::size_t i) {
    const Job& job = jobs[i];
    const bool seg_is_map = has_ext(job.seg, ".png");
    const bool dir_is_map = has_ext(job.dir, ".png");
    reconstruct::HardMaps maps;
    if (seg_is_map && dir_is_map) {
      maps.classes = io::read_class_map(job.seg);
      maps.directions = io::read_direction_map(job.dir, opts.directions);
    } else if (!seg_is_map && !dir_is_map) {
      const ProbTensor seg = io::read_tensor(job.seg);
      const ProbTensor dir = io::read_tensor(job.dir);
      if (dir.channels() != opts.directions) {
        throw Error("direction tensor has " + std::to_string(dir.channels()) +
                    " channels but --directions is " + std::to_string(opts.directions));
      }
      maps = reconstruct::maps_from_outputs(seg, dir);
    } else {
      throw Error("mixing a hard map with a tensor is not supported");
    }
    const reconstruct::PanopticResult result =
        reconstruct::decode(maps.classes, maps.directions, config);
    io::write_label_map(result.instances, opts.out / "instances" / (job.id + ".png"));
    io::write_label_map(result.classes, opts.out / "classes" / (job.id + ".png"));
    rows[i] = {job.id, reconstruct::counts_from_instances(result)};
    ok[i] = 1;
  });

  std::vector<io::CountRow> written;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (ok[i]) written.push_back(rows[i]);
  }
  io::write_counts(written, opts.out / "counts.csv");
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  check_jobs(opts.jobs);
  set_threads(opts.jobs);
  const fs::path gt_inst = opts.gt / "instances";
  const fs::path pred_inst = opts.pred / "instances";
  std::map<std::string, fs::path> gt_files, pred_files;
  for (const auto& p : list_inputs(gt_inst, false)) gt_files.emplace(p.stem().string(), p);
  for (const auto& p : list_inputs(pred_inst, false)) pred_files.emplace(p.stem().string(), p);

  std::vector<std::string> problems;
  for (const auto& [id, p] : gt_files) {
    if (!pred_files.count(id)) problems.push_back("no prediction for " + p.string());
  }
  for (const auto& [id, p] : pred_files) {
    if (!gt_files.count(id)) problems.push_back("no ground truth for " + p.string());
  }
  if (!problems.empty()) {
    for (const auto& m : problems) err << "error: " << m << '\n';
    return 1;
  }
  if (gt_files.empty()) {
    err << "error: no instance maps under " << gt_inst.string() << '\n';
    return 1;
  }

  std::vector<std::string> ids;
  for (const auto& [id, p] : gt_files) ids.push_back(id);
  std::vector<metrics::PanopticResult> gts(ids.size()), preds(ids.size());
  auto load = [](const fs::path& root, const std::string& id) {
    const InstanceMap inst = io::read_instance_map(root / "instances" / (id + ".png"));
    const ClassMap cls = io::read_class_map(root / "classes" / (id + ".png"));
    return reconstruct::assign_classes(inst, cls);
  };
  const std::size_t failures = run_batch(ids.size(), opts.jobs, ids, err, [&](std::size_t i) {
    gts[i] = load(opts.gt, ids[i]);
    preds[i] = load(opts.pred, ids[i]);
  });
  if (failures > 0) return 1;

  std::vector<metrics::ImagePair> pairs;
  for (std::size_t i = 0; i < ids.size(); ++i) pairs.push_back({&gts[i], &preds[i]});
  metrics::MetricsReport report = metrics::mpq(pairs, opts.aggregation);

  std::vector<CountVector> true_counts, pred_counts;
  std::string counts_source = "instances";
  const fs::path gt_csv = opts.gt / "counts.csv";
  const fs::path pred_csv = opts.pred / "counts.csv";
  if (fs::exists(gt_csv) && fs::exists(pred_csv)) {
    counts_source = "csv";
    std::map<std::string, CountVector> gt_rows, pred_rows;
    for (const auto& r : io::read_counts(gt_csv)) gt_rows[r.image] = r.counts;
    for (const auto& r : io::read_counts(pred_csv)) pred_rows[r.image] = r.counts;
    for (const auto& [id, counts] : gt_rows) {
      const auto it = pred_rows.find(id);
      if (it == pred_rows.end()) {
        err << "error: counts for image " << id << " missing from " << pred_csv.string() << '\n';
        return 1;
      }
      true_counts.push_back(counts);
      pred_counts.push_back(it->second);
    }
    if (pred_rows.size() != gt_rows.size()) {
      err << "error: " << pred_csv.string() << " has rows for images absent from the ground truth\n";
      return 1;
    }
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      true_counts.push_back(reconstruct::counts_from_instances(gts[i]));
      pred_counts.push_back(reconstruct::counts_from_instances(preds[i]));
    }
  }
  if (true_counts.size() >= 2) {
    metrics::attach_r2(report, metrics::multi_r2(true_counts, pred_counts, opts.r2_mode),
                       opts.r2_mode);
  } else {
    report.r2_mode = opts.r2_mode;
  }

  nlohmann::ordered_json j = metrics::to_json(report);
  j["counts_source"] = counts_source;
  j["count_images"] = true_counts.size();
  if (opts.out) {
    write_text(*opts.out, json_text(j));
  } else {
    out << json_text(j);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_counts(const CountsOptions& opts, std::ostream& out, std::ostream& err) {
  std::vector<io::CountRow> rows;
  try {
    rows = io::read_counts(opts.input);
    for (auto& row : rows) {
      try {
        row.counts = reconstruct::postprocess_counts(row.counts);
      } catch (const Error& e) {
        throw Error("image " + row.image + ": " + e.what());
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  const std::string text = io::format_counts(rows);
  if (opts.out) {
    write_text(*opts.out, text);
  } else {
    out << text;
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_synth(const SynthOptions& opts, std::ostream& err) {
  check_jobs(opts.jobs);
  set_threads(opts.jobs);
  if (opts.count < 1) throw Error("--count must be at least 1");
  opts.config.validate();
  fs::create_directories(opts.out);

  const std::size_t n = static_cast<std::size_t>(opts.count);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%04zu", i);
    ids[i] = buf;
  }
  std::vector<io::CountRow> rows(n);
  std::vector<char> ok(n, 0);
  const std::size_t failures = run_batch(n, opts.jobs, ids, err, [&](std::size_t i) {
    synth::SynthConfig cfg = opts.config;
    cfg.seed = synth::mix_seed(opts.config.seed, i);
    const synth::Bundle b = synth::generate(cfg);
    io::write_label_map(b.instances, opts.out / "instances" / (ids[i] + ".png"));
    io::write_label_map(b.classes, opts.out / "classes" / (ids[i] + ".png"));
    io::write_label_map(b.directions, opts.out / "directions" / (ids[i] + ".png"));
    if (opts.write_tensors) {
      io::write_tensor(one_hot(b.classes, kNumClasses + 1, 255, -1),
                       opts.out / "tensors" / (ids[i] + "_seg.f32"));
      // Background pixels carry a uniform direction distribution.
      ProbTensor dir = one_hot(b.directions, cfg.n_directions, kDirectionBackground, -1);
      for (std::size_t p = 0; p < b.directions.size(); ++p) {
        if (b.directions[p] != kDirectionBackground) continue;
        for (int ch = 0; ch < cfg.n_directions; ++ch) {
          dir.pixel(p)[ch] = 1.0 / cfg.n_directions;
        }
      }
      io::write_tensor(dir, opts.out / "tensors" / (ids[i] + "_dir.f32"));
    }
    rows[i] = {ids[i], b.counts};
    ok[i] = 1;
  });

  std::vector<io::CountRow> written;
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) written.push_back(rows[i]);
  }
  io::write_counts(written, opts.out / "counts.csv");
  nlohmann::json cfg_json = opts.config;
  cfg_json["count"] = opts.count;
  write_text(opts.out / "synth_config.json", cfg_json.dump(2) + "\n");
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

int cmd_render(const RenderOptions& opts, std::ostream& err) {
  try {
    const InstanceMap inst = io::read_instance_map(opts.instances);
    const ClassMap cls = io::read_class_map(opts.classes);
    io::write_rgb_png(render::render_overlay(inst, cls), opts.out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_loss(const LossOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const ProbTensor seg = io::read_tensor(opts.seg_pred);
    const ProbTensor dir = io::read_tensor(opts.dir_pred);
    const ClassMap classes = io::read_class_map(opts.classes);
    const DirectionMap directions = io::read_direction_map(opts.directions, dir.channels());

    auto pick = [&](const fs::path& path) -> CountVector {
      const auto rows = io::read_counts(path);
      if (rows.empty()) throw Error(path.string() + ": no count rows");
      if (!opts.image) return rows.front().counts;
      for (const auto& r : rows) {
        if (r.image == *opts.image) return r.counts;
      }
      throw Error(path.string() + ": no row for image " + *opts.image);
    };

    losses::LossInputs inputs{&seg, &classes, &dir, &directions, pick(opts.counts_pred),
                              pick(opts.counts_gt)};
    const losses::LossBreakdown loss = losses::total_loss(inputs, opts.weights);
    const std::string text = json_text(losses::to_json(loss, opts.weights));
    if (opts.out) {
      write_text(*opts.out, text);
    } else {
      out << text;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace nucpan::cli
