#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "nucpan/cli.hpp"
#include "nucpan/dircodec.hpp"
#include "nucpan/reconstruct.hpp"
#include "nucpan/tensorio.hpp"
#include "support.hpp"

using namespace nucpan;
using namespace nucpan::cli;
using testing::TempDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void make_bundle(const fs::path& out, int count, std::uint64_t seed, bool tensors = false) {
  SynthOptions opts;
  opts.out = out;
  opts.count = count;
  opts.config.height = opts.config.width = 64;
  opts.config.n_nuclei = 6;
  opts.config.seed = seed;
  opts.write_tensors = tensors;
  std::ostringstream err;
  REQUIRE(cmd_synth(opts, err) == 0);
}

void copy_tree(const fs::path& from, const fs::path& to) {
  fs::copy(from, to, fs::copy_options::recursive);
}

nlohmann::json run_eval(const fs::path& gt, const fs::path& pred) {
  EvalOptions opts;
  opts.gt = gt;
  opts.pred = pred;
  std::ostringstream out, err;
  REQUIRE(cmd_eval(opts, out, err) == 0);
  return nlohmann::json::parse(out.str());
}

}  // namespace

TEST_CASE("image ids and weights") {
  CHECK(image_id("a/img_0001_seg.f32") == "img_0001");
  CHECK(image_id("img_0001_dir.f32") == "img_0001");
  CHECK(image_id("x.png") == "x");
  CHECK(image_id("_seg.f32") == "_seg");
  const auto w = parse_weights("1,2,3.5,0.25");
  CHECK(w.dice == 2.0);
  CHECK(w.l2 == 0.25);
  CHECK_THROWS_AS((void)parse_weights("1,2,3"), Error);
  CHECK_THROWS_AS((void)parse_weights("1,2,x,4"), Error);
  CHECK_THROWS_AS((void)parse_weights("1,2,-3,4"), Error);
}

TEST_CASE("encode: single file, directory, and a corrupt input") {
  TempDir tmp("cli");
  make_bundle(tmp / "gt", 3, 1);

  EncodeOptions one;
  one.inputs = {tmp / "gt" / "instances" / "img_0000.png"};
  one.out = tmp / "single.png";
  std::ostringstream err;
  REQUIRE(cmd_encode(one, err) == 0);
  CHECK(io::read_direction_map(tmp / "single.png") ==
        io::read_direction_map(tmp / "gt" / "directions" / "img_0000.png"));

  EncodeOptions dir;
  dir.inputs = {tmp / "gt" / "instances"};
  dir.out = tmp / "enc";
  REQUIRE(cmd_encode(dir, err) == 0);
  for (const char* id : {"img_0000", "img_0001", "img_0002"}) {
    const std::string name = std::string(id) + ".png";
    CHECK(slurp(tmp / "enc" / name) == slurp(tmp / "gt" / "directions" / name));
  }

  fs::create_directories(tmp / "mixed");
  fs::copy(tmp / "gt" / "instances" / "img_0000.png", tmp / "mixed" / "a.png");
  std::ofstream(tmp / "mixed" / "b.png") << "garbage";
  fs::copy(tmp / "gt" / "instances" / "img_0001.png", tmp / "mixed" / "c.png");
  EncodeOptions bad;
  bad.inputs = {tmp / "mixed"};
  bad.out = tmp / "enc2";
  std::ostringstream bad_err;
  CHECK(cmd_encode(bad, bad_err) != 0);
  CHECK(bad_err.str().find("b.png") != std::string::npos);
  CHECK(fs::exists(tmp / "enc2" / "a.png"));
  CHECK(fs::exists(tmp / "enc2" / "c.png"));
}

TEST_CASE("decode: hard maps and tensors give the same files") {
  TempDir tmp("cli");
  make_bundle(tmp / "gt", 4, 2, true);
  std::ostringstream err;

  DecodeOptions maps;
  maps.seg = tmp / "gt" / "classes";
  maps.dir = tmp / "gt" / "directions";
  maps.out = tmp / "from_maps";
  REQUIRE(cmd_decode(maps, err) == 0);

  DecodeOptions tensors = maps;
  tensors.seg = tmp / "gt" / "tensors";
  tensors.dir = tmp / "gt" / "tensors";
  tensors.out = tmp / "from_tensors";
  REQUIRE(cmd_decode(tensors, err) == 0);

  for (const char* sub : {"instances", "classes"}) {
    for (int i = 0; i < 4; ++i) {
      const std::string name = "img_000" + std::to_string(i) + ".png";
      CHECK(slurp(tmp / "from_maps" / sub / name) == slurp(tmp / "from_tensors" / sub / name));
    }
  }
  CHECK(slurp(tmp / "from_maps" / "counts.csv") == slurp(tmp / "from_tensors" / "counts.csv"));
  CHECK(slurp(tmp / "from_maps" / "counts.csv") == slurp(tmp / "gt" / "counts.csv"));

  for (int i = 0; i < 4; ++i) {
    const std::string name = "img_000" + std::to_string(i) + ".png";
    CHECK(testing::equal_up_to_relabel(io::read_instance_map(tmp / "from_maps" / "instances" / name),
                                       io::read_instance_map(tmp / "gt" / "instances" / name)));
  }
}

TEST_CASE("decode: encode output fed back recovers the instances") {
  TempDir tmp("cli");
  make_bundle(tmp / "gt", 2, 3);
  std::ostringstream err;
  EncodeOptions enc;
  enc.inputs = {tmp / "gt" / "instances"};
  enc.out = tmp / "enc";
  REQUIRE(cmd_encode(enc, err) == 0);
  DecodeOptions dec;
  dec.seg = tmp / "gt" / "classes";
  dec.dir = tmp / "enc";
  dec.out = tmp / "dec";
  REQUIRE(cmd_decode(dec, err) == 0);
  const auto report = run_eval(tmp / "gt", tmp / "dec");
  CHECK(report["mpq"] == 1.0);
}

TEST_CASE("decode: errors") {
  TempDir tmp("cli");
  io::write_label_map(ClassMap(4, 4, 1), tmp / "c.png");
  io::write_label_map(DirectionMap(5, 4, 4), tmp / "d.png");
  DecodeOptions dec;
  dec.seg = tmp / "c.png";
  dec.dir = tmp / "d.png";
  dec.out = tmp / "out";
  std::ostringstream err;
  CHECK(cmd_decode(dec, err) != 0);
  CHECK(err.str().find("dimension mismatch") != std::string::npos);

  fs::create_directories(tmp / "segs");
  fs::create_directories(tmp / "dirs");
  io::write_label_map(ClassMap(4, 4, 0), tmp / "segs" / "x.png");
  io::write_label_map(DirectionMap(4, 4, 4), tmp / "dirs" / "y.png");
  dec.seg = tmp / "segs";
  dec.dir = tmp / "dirs";
  CHECK_THROWS_WITH_AS((void)cmd_decode(dec, err), doctest::Contains("unpaired"), Error);
}

TEST_CASE("eval: perfect, empty and oracle-checked predictions") {
  TempDir tmp("cli");
  make_bundle(tmp / "gt", 5, 4);
  copy_tree(tmp / "gt", tmp / "copy");
  const auto perfect = run_eval(tmp / "gt", tmp / "copy");
  CHECK(perfect["mpq"] == 1.0);
  CHECK(perfect["r2_t"] == 1.0);
  CHECK(perfect["counts_source"] == "csv");

  // Empty predictions, no counts CSV: counts come from the instance maps.
  fs::create_directories(tmp / "empty" / "instances");
  fs::create_directories(tmp / "empty" / "classes");
  std::vector<reconstruct::PanopticResult> gts, empties;
  for (int i = 0; i < 5; ++i) {
    const std::string name = "img_000" + std::to_string(i) + ".png";
    const InstanceMap inst = io::read_instance_map(tmp / "gt" / "instances" / name);
    io::write_label_map(InstanceMap(inst.height(), inst.width(), 0), tmp / "empty" / "instances" / name);
    io::write_label_map(ClassMap(inst.height(), inst.width(), 0), tmp / "empty" / "classes" / name);
    gts.push_back(reconstruct::assign_classes(inst, io::read_class_map(tmp / "gt" / "classes" / name)));
    empties.push_back(reconstruct::assign_classes(InstanceMap(inst.height(), inst.width(), 0),
                                                  ClassMap(inst.height(), inst.width(), 0)));
  }
  const auto empty = run_eval(tmp / "gt", tmp / "empty");
  CHECK(empty["mpq"] == 0.0);
  CHECK(empty["counts_source"] == "instances");

  std::vector<metrics::ImagePair> pairs;
  for (int i = 0; i < 5; ++i) pairs.push_back({&gts[i], &empties[i]});
  const auto expected = metrics::to_json(metrics::mpq(pairs));
  CHECK(empty["classes"].dump() != "");
  for (const auto& [name, entry] : expected["classes"].items()) {
    CHECK(empty["classes"][name]["tp"] == entry["tp"]);
    CHECK(empty["classes"][name]["fn"] == entry["fn"]);
    CHECK(empty["classes"][name]["pq"] == entry["pq"]);
  }

  // Missing prediction for an image is an error naming it.
  fs::remove(tmp / "copy" / "instances" / "img_0003.png");
  EvalOptions opts;
  opts.gt = tmp / "gt";
  opts.pred = tmp / "copy";
  std::ostringstream out, err;
  CHECK(cmd_eval(opts, out, err) != 0);
  CHECK(err.str().find("img_0003") != std::string::npos);
}

TEST_CASE("counts command") {
  TempDir tmp("cli");
  const std::string header = "image,neutrophil,epithelial,lymphocyte,plasma,eosinophil,connective\n";
  {
    std::ofstream(tmp / "raw.csv") << header << "img1,-0.4,2.6,0,1.2,0.5,3\n";
  }
  CountsOptions opts;
  opts.input = tmp / "raw.csv";
  opts.out = tmp / "int.csv";
  std::ostringstream out, err;
  REQUIRE(cmd_counts(opts, out, err) == 0);
  CHECK(slurp(tmp / "int.csv") == header + "img1,0,3,0,1,1,3\n");

  opts.input = tmp / "int.csv";
  opts.out = tmp / "again.csv";
  REQUIRE(cmd_counts(opts, out, err) == 0);
  CHECK(slurp(tmp / "again.csv") == slurp(tmp / "int.csv"));

  {
    std::ofstream(tmp / "bad.csv") << header << "a,1,2,3,4,5,6\nb,1,2,3\n";
  }
  opts.input = tmp / "bad.csv";
  opts.out.reset();
  std::ostringstream bad_err;
  CHECK(cmd_counts(opts, out, bad_err) != 0);
  CHECK(bad_err.str().find("row 3") != std::string::npos);
}

TEST_CASE("synth is reproducible and parallel-safe") {
  TempDir tmp("cli");
  make_bundle(tmp / "a", 6, 9);
  make_bundle(tmp / "b", 6, 9);
  SynthOptions par;
  par.out = tmp / "c";
  par.count = 6;
  par.config.height = par.config.width = 64;
  par.config.n_nuclei = 6;
  par.config.seed = 9;
  par.jobs = 4;
  std::ostringstream err;
  REQUIRE(cmd_synth(par, err) == 0);
  for (const auto& entry : fs::recursive_directory_iterator(tmp / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), tmp / "a");
    CHECK(slurp(entry.path()) == slurp(tmp / "b" / rel));
    CHECK(slurp(entry.path()) == slurp(tmp / "c" / rel));
  }
}

TEST_CASE("render") {
  TempDir tmp("cli");
  InstanceMap inst(4, 5, 0);
  inst(0, 0) = 1;
  inst(1, 1) = 2;
  inst(2, 2) = 3;
  inst(3, 4) = 65535;
  ClassMap cls(4, 5, 0);
  for (std::size_t i = 0; i < inst.size(); ++i) cls[i] = inst[i] ? 2 : 0;
  io::write_label_map(inst, tmp / "i.png");
  io::write_label_map(cls, tmp / "c.png");
  RenderOptions opts{tmp / "i.png", tmp / "c.png", tmp / "o.png"};
  std::ostringstream err;
  REQUIRE(cmd_render(opts, err) == 0);
  const io::RgbImage img = io::read_rgb_png(tmp / "o.png");
  CHECK(img.width == 10);
  CHECK(img.height == 4);
  std::set<std::array<int, 3>> colors;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 5; ++c) {
      const std::size_t o = (static_cast<std::size_t>(r) * 10 + c) * 3;
      const std::array<int, 3> rgb{img.rgb[o], img.rgb[o + 1], img.rgb[o + 2]};
      if (inst(r, c) == 0) {
        CHECK(rgb == std::array<int, 3>{0, 0, 0});
      } else {
        CHECK(rgb != std::array<int, 3>{0, 0, 0});
        colors.insert(rgb);
      }
    }
  }
  CHECK(colors.size() == 4);

  io::write_label_map(InstanceMap(3, 3, 0), tmp / "ei.png");
  io::write_label_map(ClassMap(3, 3, 0), tmp / "ec.png");
  RenderOptions empty{tmp / "ei.png", tmp / "ec.png", tmp / "eo.png"};
  REQUIRE(cmd_render(empty, err) == 0);
  const io::RgbImage black = io::read_rgb_png(tmp / "eo.png");
  CHECK(std::all_of(black.rgb.begin(), black.rgb.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("loss command") {
  TempDir tmp("cli");
  make_bundle(tmp / "gt", 1, 5, true);
  const fs::path t = tmp / "gt" / "tensors";
  LossOptions opts;
  opts.seg_pred = t / "img_0000_seg.f32";
  opts.dir_pred = t / "img_0000_dir.f32";
  opts.classes = tmp / "gt" / "classes" / "img_0000.png";
  opts.directions = tmp / "gt" / "directions" / "img_0000.png";
  opts.counts_pred = tmp / "gt" / "counts.csv";
  opts.counts_gt = tmp / "gt" / "counts.csv";
  std::ostringstream out, err;
  REQUIRE(cmd_loss(opts, out, err) == 0);
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j["total"].get<double>() <= 1e-5);
  CHECK(j["weights"]["ce"] == 1.0);
  CHECK(j["weights"]["dice"] == 4.0);
  CHECK(j["weights"]["dir"] == 2.0);
  CHECK(j["weights"]["l2"] == 0.005);

  const std::string header = "image,neutrophil,epithelial,lymphocyte,plasma,eosinophil,connective\n";
  std::ofstream(tmp / "pred.csv") << header << "img_0000,100,100,100,100,100,100\n";
  opts.counts_pred = tmp / "pred.csv";
  opts.weights = parse_weights("0,0,0,2");
  std::ostringstream out2;
  REQUIRE(cmd_loss(opts, out2, err) == 0);
  const auto j2 = nlohmann::json::parse(out2.str());
  CHECK(j2["total"].get<double>() == 2.0 * j2["terms"]["l2"].get<double>());
  CHECK(j2["weights"]["l2"] == 2.0);

  opts.image = "missing";
  std::ostringstream err2;
  CHECK(cmd_loss(opts, out2, err2) != 0);
  CHECK(err2.str().find("missing") != std::string::npos);
}
