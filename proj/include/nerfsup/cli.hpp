// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Subcommands behind the `nerfsup` executable. Argument parsing lives in
// tools/; everything here takes a resolved RunConfig so tests can drive the
// commands directly.
//
// Parameter precedence, lowest first: built-in defaults, the config file's
// top-level keys, the config file's section named after the subcommand,
// NERFSUP_<KEY> environment variables, command-line flags.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "nerfsup/correspondence.hpp"
#include "nerfsup/dataio.hpp"
#include "nerfsup/descriptor.hpp"
#include "nerfsup/error.hpp"
#include "nerfsup/field.hpp"
#include "nerfsup/fixtures.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/metrics.hpp"
#include "nerfsup/optimizer.hpp"
#include "nerfsup/parallel.hpp"
#include "nerfsup/renderer.hpp"

namespace nerfsup::cli {

struct ParamSpec {
  std::string name;
  nlohmann::json value;  // default; its JSON type is the parameter's type
  std::string help;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"synth", "train-field", "gen", "train-desc", "eval", "render"};
  return s;
}

// Every parameter of every subcommand with its default.
inline std::vector<ParamSpec> parameter_table(const std::string& sub) {
  using nlohmann::json;
  std::vector<ParamSpec> t{
      {"seed", json(std::uint64_t(0)), "random seed (64-bit)"},
      {"threads", json(1), "worker threads; outputs do not depend on it"},
      {"out", json("out"), "output directory"},
  };
  auto add = [&](std::string n, json v, std::string h) { t.push_back({std::move(n), std::move(v), std::move(h)}); };
  if (sub == "synth") {
    add("fixture", "slab", "fixture name: slab, sphere, thin_rod, paired_sheets, transient_shadow");
    add("views", 16, "training views");
    add("test_views", 4, "held-out views");
    add("width", 64, "image width");
    add("height", 64, "image height");
    add("focal", 80.0, "focal length in pixels");
    add("camera_distance", 3.2, "camera distance from the origin");
    add("sparse_depth_per_view", 48, "sparse depth points per training view");
    add("annotations", 100, "annotated correspondences between held-out views");
    add("shadows", true, "apply the fixture's transient shadows to training views");
  } else if (sub == "train-field") {
    add("manifest", "", "training manifest");
    add("iterations", 1500, "optimizer steps");
    add("batch_size", 512, "rays per step");
    add("depth_batch_size", 64, "sparse depth points per step");
    add("learning_rate", 800.0, "step size");
    add("momentum", 0.9, "heavy-ball momentum");
    add("lambda_depth", 1.0, "weight of the sparse depth loss");
    add("k_samples", 96, "samples per ray");
    add("stratified", true, "jitter sample positions during training");
    add("resolution", 48, "voxels per axis");
    add("color_model", "constant", "constant or sh1");
    add("init_density_raw", -3.0, "initial raw density");
    add("resume", "", "optimizer state to resume from");
    add("checkpoint_every", 0, "write optimizer state every N steps (0: only at the end)");
  } else if (sub == "gen") {
    add("field", "", "field snapshot");
    add("manifest", "", "manifest of the images to pair");
    add("method", "density-field", "depth-map or density-field");
    add("pairs", 64, "image pairs");
    add("samples_per_pair", 64, "source pixels per pair");
    add("cycle_threshold", 2.0, "cycle-check threshold in pixels");
    add("cycle_check", true, "reject tuples that fail the cycle check");
    add("k_samples", 192, "samples per ray");
    add("jitter", false, "jitter the drawn depth inside its interval");
    add("reverse_expected_depth", false, "cycle check maps back with the expected depth");
    add("empty_threshold", kEmptyRayMass, "rays with less termination mass are skipped");
  } else if (sub == "train-desc") {
    add("tuples", "", "correspondence tuples CSV");
    add("manifest", "", "manifest of the images the tuples refer to");
    add("steps", 800, "optimizer steps");
    add("batch_size", 32, "matches per step");
    add("nonmatches", 4, "non-matches per match");
    add("margin", 0.5, "non-match hinge margin");
    add("nonmatch_exclusion", 3.0, "non-matches keep at least this many pixels from the match");
    add("learning_rate", 1e-2, "Adam step size");
    add("dim", 3, "descriptor dimension");
    add("layers", 3, "convolution layers");
    add("hidden", 16, "hidden channels");
    add("padding", "zero", "zero or wrap");
  } else if (sub == "eval") {
    add("model", "", "descriptor model snapshot");
    add("manifest", "", "manifest of the annotated views");
    add("annotations", "", "annotations CSV");
    add("oracle", false, "use the perfect matcher instead of a model");
    add("label", "", "method column of the result row");
    add("visualize", true, "write descriptor images");
  } else if (sub == "render") {
    add("field", "", "field snapshot");
    add("manifest", "", "views to render");
    add("k_samples", 192, "samples per ray");
    add("depth_gt", "", "directory of <id>.depth ground-truth depth maps");
  } else {
    throw ConfigError("unknown subcommand '" + sub + "'");
  }
  return t;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

inline std::string env_name(const std::string& key) {
  std::string n = "NERFSUP_";
  for (char c : key) n += char(std::toupper(static_cast<unsigned char>(c)));
  return n;
}

namespace detail {

// Converts a textual value to the JSON type of `def`.
inline nlohmann::json parse_as(const nlohmann::json& def, const std::string& text, const std::string& where) {
  auto bad = [&](const char* what) { return ConfigError(where + ": expected " + what + ", got '" + text + "'"); };
  if (def.is_boolean()) {
    std::string s;
    for (char c : text) s += char(std::tolower(static_cast<unsigned char>(c)));
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw bad("a boolean");
  }
  if (def.is_number_unsigned()) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) throw bad("an unsigned 64-bit integer");
    return v;
  }
  if (def.is_number_integer()) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size() || v < std::numeric_limits<int>::min() ||
        v > std::numeric_limits<int>::max())
      throw bad("an integer");
    return int(v);
  }
  if (def.is_number_float()) {
    try {
      const double v = parse_double(text, where);
      if (!std::isfinite(v)) throw bad("a finite number");
      return v;
    } catch (const LoadError&) {
      throw bad("a number");
    }
  }
  return text;
}

// Checks a JSON value from a config file against the default's type.
inline nlohmann::json coerce(const nlohmann::json& def, const nlohmann::json& v, const std::string& where) {
  if (def.is_boolean() && v.is_boolean()) return v;
  if (def.is_number_unsigned() && v.is_number_unsigned()) return v;
  if (def.is_number_unsigned() && v.is_number_integer() && v.get<long long>() >= 0) return v.get<std::uint64_t>();
  if (def.is_number_integer() && !def.is_number_unsigned() && v.is_number_integer()) return parse_as(def, v.dump(), where);
  if (def.is_number_float() && v.is_number()) return v.get<double>();
  if (def.is_string() && v.is_string()) return v;
  throw ConfigError(where + ": expected a value like " + def.dump() + ", got " + v.dump());
}

}  // namespace detail

struct RunConfig {
  std::string subcommand;
  std::string config_path;
  nlohmann::json params = nlohmann::json::object();

  std::uint64_t seed() const { return params.at("seed").get<std::uint64_t>(); }
  int threads() const { return params.at("threads").get<int>(); }
  std::string out() const { return params.at("out").get<std::string>(); }
  int get_int(const std::string& k) const { return params.at(k).get<int>(); }
  double get_double(const std::string& k) const { return params.at(k).get<double>(); }
  bool get_bool(const std::string& k) const { return params.at(k).get<bool>(); }
  std::string get_string(const std::string& k) const { return params.at(k).get<std::string>(); }

  // Parameters echoed into run.json. The thread count and output directory
  // do not influence any artifact, so they are left out and two runs that
  // differ only in those produce identical directories.
  nlohmann::json recorded() const {
    nlohmann::json p = params;
    p.erase("threads");
    p.erase("out");
    return p;
  }
};

inline RunConfig resolve_config(const std::string& sub, const std::string& config_path,
                                const std::map<std::string, std::string>& overrides,
                                const EnvLookup& env = process_env) {
  RunConfig rc;
  rc.subcommand = sub;
  rc.config_path = config_path;
  const std::vector<ParamSpec> table = parameter_table(sub);
  std::map<std::string, const ParamSpec*> by_name;
  for (const ParamSpec& p : table) {
    by_name[p.name] = &p;
    rc.params[p.name] = p.value;
  }
  if (!config_path.empty()) {
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(config_path + ": not valid JSON (" + e.what() + ")");
    } catch (const LoadError& e) {
      throw ConfigError(e.what());
    }
    if (!file.is_object()) throw ConfigError(config_path + ": expected a JSON object");
    auto apply = [&](const nlohmann::json& obj, const std::string& where, bool strict) {
      for (const auto& [k, v] : obj.items()) {
        const auto it = by_name.find(k);
        if (it == by_name.end()) {
          if (strict) throw ConfigError(where + ": unknown parameter '" + k + "'");
          continue;
        }
        rc.params[k] = detail::coerce(it->second->value, v, where + ": " + k);
      }
    };
    // Top-level keys may belong to other subcommands, so only the section is strict.
    nlohmann::json top = file;
    for (const std::string& s : subcommands()) top.erase(s);
    apply(top, config_path, false);
    if (file.contains(sub)) {
      if (!file.at(sub).is_object()) throw ConfigError(config_path + ": section '" + sub + "' must be an object");
      apply(file.at(sub), config_path + " [" + sub + "]", true);
    }
  }
  for (const ParamSpec& p : table)
    if (const auto v = env(env_name(p.name))) rc.params[p.name] = detail::parse_as(p.value, *v, env_name(p.name));
  for (const auto& [k, v] : overrides) {
    const auto it = by_name.find(k);
    if (it == by_name.end()) throw ConfigError(sub + ": unknown parameter '" + k + "'");
    rc.params[k] = detail::parse_as(it->second->value, v, "--" + k);
  }
  if (rc.threads() < 1) throw ConfigError("threads must be at least 1");
  if (rc.out().empty()) throw ConfigError("output directory must not be empty");
  return rc;
}

// Holds an exclusive lock on the output directory for the lifetime of a run.
class OutputDir {
 public:
  explicit OutputDir(const std::string& path) : path_(path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec || !std::filesystem::is_directory(path)) throw Error("cannot create output directory " + path);
    fd_ = ::open(path.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd_ < 0) throw Error("cannot open output directory " + path);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error("output directory " + path + " is in use by another run");
    }
  }
  ~OutputDir() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
  int fd_ = -1;
};

namespace detail {

inline void write_run_manifest(const OutputDir& out, const RunConfig& rc) {
  const nlohmann::json j{{"program", "nerfsup"}, {"subcommand", rc.subcommand}, {"parameters", rc.recorded()}};
  write_file(out.file("run.json"), j.dump(2) + "\n");
}

inline std::string required(const RunConfig& rc, const std::string& key) {
  const std::string v = rc.get_string(key);
  if (v.empty()) throw ConfigError(rc.subcommand + ": --" + key + " is required");
  return v;
}

inline Dataset load_dataset(const RunConfig& rc) { return load_manifest(required(rc, "manifest")); }

inline ColorModel parse_color_model(const std::string& s) {
  if (s == "constant") return ColorModel::kConstant;
  if (s == "sh1") return ColorModel::kSphericalHarmonics1;
  throw ConfigError("unknown color model '" + s + "' (expected constant or sh1)");
}

inline Padding parse_padding(const std::string& s) {
  if (s == "zero") return Padding::kZero;
  if (s == "wrap") return Padding::kWrap;
  throw ConfigError("unknown padding '" + s + "' (expected zero or wrap)");
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_synth(const RunConfig& rc, std::ostream& log) {
  FixtureParams p;
  p.name = rc.get_string("fixture");
  p.seed = rc.seed();
  p.views = rc.get_int("views");
  p.test_views = rc.get_int("test_views");
  p.width = rc.get_int("width");
  p.height = rc.get_int("height");
  p.focal = rc.get_double("focal");
  p.camera_distance = rc.get_double("camera_distance");
  p.sparse_depth_per_view = rc.get_int("sparse_depth_per_view");
  p.annotations = rc.get_int("annotations");
  const Fixture f = make_fixture(p);
  OutputDir out(rc.out());
  detail::write_run_manifest(out, rc);

  const auto train = render_rig(f, f.train, rc.get_bool("shadows"), rc.threads());
  save_manifest(rc.out(), train, f.scene.bbox(), "manifest.json");
  write_file(out.file("fixture.json"), fixture_to_json(f).dump(2) + "\n");
  log << "synth: " << train.size() << " training views of '" << p.name << "'\n";
  if (f.test.size() == 0) return 0;

  std::vector<DepthMap> depth;
  auto test = render_rig(f, f.test, false, rc.threads(), &depth);
  for (PosedImage& im : test) im.sparse_depth.clear();
  save_manifest(rc.out(), test, f.scene.bbox(), "test_manifest.json");
  for (std::size_t i = 0; i < test.size(); ++i) save_depth_map(out.file("depth/" + test[i].id + ".depth"), depth[i]);
  if (test.size() >= 2 && p.annotations > 0) {
    save_annotations(out.file("annotations.csv"), make_annotations(f, f.test, test, p.annotations));
  }
  log << "synth: " << test.size() << " held-out views\n";
  return 0;
}

inline int cmd_train_field(const RunConfig& rc, std::ostream& log) {
  const Dataset ds = detail::load_dataset(rc);
  TrainConfig cfg;
  cfg.iterations = rc.get_int("iterations");
  cfg.batch_size = rc.get_int("batch_size");
  cfg.depth_batch_size = rc.get_int("depth_batch_size");
  cfg.learning_rate = rc.get_double("learning_rate");
  cfg.momentum = rc.get_double("momentum");
  cfg.depth_loss_weight = rc.get_double("lambda_depth");
  cfg.k_samples = rc.get_int("k_samples");
  cfg.stratified = rc.get_bool("stratified");
  cfg.seed = rc.seed();
  cfg.threads = rc.threads();
  const int res = rc.get_int("resolution");
  cfg.resolution = {res, res, res};
  if (ds.bbox) cfg.bbox = *ds.bbox;
  cfg.color_model = detail::parse_color_model(rc.get_string("color_model"));
  cfg.init_density_raw = rc.get_double("init_density_raw");
  cfg.validate();
  const int checkpoint_every = rc.get_int("checkpoint_every");
  if (checkpoint_every < 0) throw ConfigError("train-field: checkpoint_every must be non-negative");

  TrainState<float> state;
  std::string curve;
  const std::string resume = rc.get_string("resume");
  OutputDir out(rc.out());
  if (!resume.empty()) {
    state = load_train_state(resume);
    if (!(state.field.resolution() == cfg.resolution) || !(state.field.bbox() == cfg.bbox) ||
        state.field.color_model() != cfg.color_model)
      throw ConfigError("train-field: " + resume + " was written with a different grid");
    // Keep the rows of the steps already taken.
    if (std::filesystem::exists(out.file("loss.csv"))) {
      const std::string old = read_file(out.file("loss.csv"));
      const auto rows = nerfsup::detail::lines(old);
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto step = nerfsup::detail::split(rows[r], ',').front();
        if (parse_double(step, "loss.csv") < double(state.step)) curve += std::string(rows[r]) + "\n";
      }
    }
    log << "train-field: resuming at step " << state.step << "\n";
  } else {
    state = TrainState<float>::initial(cfg);
  }
  detail::write_run_manifest(out, rc);

  train_resume(ds.images, cfg, state, [&](const LossRecord& r) {
    curve += loss_csv_row(r);
    // The callback runs before the step's update, so this state resumes at r.step.
    if (checkpoint_every > 0 && r.step > 0 && r.step % std::uint64_t(checkpoint_every) == 0) {
      save_train_state(state, out.file("train_state.bin"));
      write_file(out.file("loss.csv"), loss_csv_header() + curve);
    }
  });
  save_train_state(state, out.file("train_state.bin"));
  save_field(state.field, out.file("field.bin"));
  write_file(out.file("loss.csv"), loss_csv_header() + curve);
  log << "train-field: " << state.step << " steps, field written to " << out.file("field.bin") << "\n";
  return 0;
}

inline int cmd_gen(const RunConfig& rc, std::ostream& log) {
  const RadianceField field = load_field(detail::required(rc, "field"));
  const Dataset ds = detail::load_dataset(rc);
  GenConfig cfg;
  cfg.method = parse_method(rc.get_string("method"));
  cfg.pairs = rc.get_int("pairs");
  cfg.samples_per_pair = rc.get_int("samples_per_pair");
  cfg.cycle_threshold = rc.get_double("cycle_threshold");
  cfg.cycle_check = rc.get_bool("cycle_check");
  cfg.k_samples = rc.get_int("k_samples");
  cfg.jitter = rc.get_bool("jitter");
  cfg.reverse_expected_depth = rc.get_bool("reverse_expected_depth");
  cfg.empty_threshold = rc.get_double("empty_threshold");
  cfg.seed = rc.seed();
  cfg.threads = rc.threads();
  cfg.validate();
  OutputDir out(rc.out());
  detail::write_run_manifest(out, rc);
  const GenerationResult r = generate_dataset(field, std::span<const PosedImage>(ds.images), cfg);
  save_tuples(out.file("tuples.csv"), r.tuples);
  write_file(out.file("report.json"), r.report.to_json().dump(2) + "\n");
  log << "gen: " << r.report.emitted << " of " << r.report.attempted << " tuples accepted (empty ray "
      << r.report.rejected_empty_ray << ", out of bounds " << r.report.rejected_out_of_bounds << ", cycle "
      << r.report.rejected_cycle << ")\n";
  if (r.report.emitted == 0) log << "gen: warning: no tuples were accepted\n";
  for (const std::string& w : r.report.warnings) log << "gen: warning: " << w << "\n";
  return 0;
}

inline int cmd_train_desc(const RunConfig& rc, std::ostream& log) {
  const std::vector<CorrespondenceTuple> tuples = load_tuples(detail::required(rc, "tuples"));
  if (tuples.empty()) throw DatasetError("train-desc: " + rc.get_string("tuples") + " holds no tuples");
  const Dataset ds = detail::load_dataset(rc);
  DescTrainConfig cfg;
  cfg.steps = rc.get_int("steps");
  cfg.batch_size = rc.get_int("batch_size");
  cfg.n_nonmatches = rc.get_int("nonmatches");
  cfg.margin = rc.get_double("margin");
  cfg.nonmatch_exclusion = rc.get_double("nonmatch_exclusion");
  cfg.learning_rate = rc.get_double("learning_rate");
  cfg.arch.dim = rc.get_int("dim");
  cfg.arch.layers = rc.get_int("layers");
  cfg.arch.hidden = rc.get_int("hidden");
  cfg.arch.padding = detail::parse_padding(rc.get_string("padding"));
  cfg.seed = rc.seed();
  cfg.threads = rc.threads();
  cfg.validate();
  OutputDir out(rc.out());
  detail::write_run_manifest(out, rc);
  std::vector<DescLossRecord> curve;
  const auto model = train_descriptors(tuples, ds.images, cfg, &curve);
  save_model(model, out.file("model.bin"));
  std::string csv = "step,loss\n";
  for (const DescLossRecord& r : curve) csv += std::to_string(r.step) + "," + format_double(r.loss) + "\n";
  write_file(out.file("loss.csv"), csv);
  log << "train-desc: " << cfg.steps << " steps on " << tuples.size() << " tuples\n";
  return 0;
}

inline int cmd_eval(const RunConfig& rc, std::ostream& log) {
  const auto annotations = load_annotations(detail::required(rc, "annotations"));
  const bool oracle = rc.get_bool("oracle");
  std::string label = rc.get_string("label");
  OutputDir out(rc.out());
  EvalResult result;
  if (oracle) {
    detail::write_run_manifest(out, rc);
    result = evaluate_matcher([](const AnnotatedCorrespondence& a) { return std::optional<Pixel>(a.u_t_gt); },
                              annotations);
    if (label.empty()) label = "oracle";
  } else {
    const auto model = load_model(detail::required(rc, "model"));
    const Dataset ds = detail::load_dataset(rc);
    detail::write_run_manifest(out, rc);
    std::map<std::string, DescriptorImage> desc;
    result = evaluate_descriptors(model, std::span<const PosedImage>(ds.images), annotations, rc.threads(), &desc);
    if (rc.get_bool("visualize"))
      for (const auto& [id, d] : desc) write_image(out.file("descriptors/" + id + ".png"), visualize(d));
    if (label.empty()) label = "descriptor";
  }
  result.method = label;
  write_file(out.file("eval.csv"), eval_csv_header() + eval_csv_row(result));
  log << "eval: " << label << " n=" << result.n << " aepe=" << format_double(result.aepe)
      << " pck3=" << format_double(result.pck_at(3.0)) << " pck5=" << format_double(result.pck_at(5.0)) << "\n";
  return 0;
}

inline int cmd_render(const RunConfig& rc, std::ostream& log) {
  const RadianceField field = load_field(detail::required(rc, "field"));
  const Dataset ds = detail::load_dataset(rc);
  const int k = rc.get_int("k_samples");
  if (k < 2) throw ConfigError("render: need at least 2 samples per ray");
  const std::string depth_gt = rc.get_string("depth_gt");
  OutputDir out(rc.out());
  detail::write_run_manifest(out, rc);
  std::vector<RenderedView> views(ds.images.size());
  parallel_for(ds.images.size(), rc.threads(), [&](std::size_t i) {
    views[i] = render_view(field, ds.images[i].intr, ds.images[i].pose, k);
  });
  std::string csv = "id,psnr,depth_aepe\n";
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const PosedImage& im = ds.images[i];
    write_image(out.file("render/" + im.id + ".png"), views[i].image);
    save_depth_map(out.file("render/" + im.id + ".depth"), views[i].depth);
    csv += im.id + "," + format_double(psnr(quantize(views[i].image), im.image)) + ",";
    const std::string gt_path = depth_gt.empty() ? "" : depth_gt + "/" + im.id + ".depth";
    if (!gt_path.empty() && std::filesystem::exists(gt_path)) {
      const DepthMap gt = load_depth_map(gt_path);
      if (gt.width != views[i].depth.width || gt.height != views[i].depth.height)
        throw DatasetError(gt_path + ": size does not match view '" + im.id + "'");
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t p = 0; p < gt.data.size(); ++p)
        if (gt.data[p] > 0.0f) {
          sum += std::abs(double(views[i].depth.data[p]) - gt.data[p]);
          ++n;
        }
      if (n > 0) csv += format_double(sum / double(n));
    }
    csv += "\n";
  }
  write_file(out.file("render.csv"), csv);
  log << "render: " << ds.images.size() << " views\n";
  return 0;
}

inline int run(const RunConfig& rc, std::ostream& log = std::cerr) {
  const std::string& s = rc.subcommand;
  if (s == "synth") return cmd_synth(rc, log);
  if (s == "train-field") return cmd_train_field(rc, log);
  if (s == "gen") return cmd_gen(rc, log);
  if (s == "train-desc") return cmd_train_desc(rc, log);
  if (s == "eval") return cmd_eval(rc, log);
  if (s == "render") return cmd_render(rc, log);
  throw ConfigError("unknown subcommand '" + s + "'");
}

}  // namespace nerfsup::cli
