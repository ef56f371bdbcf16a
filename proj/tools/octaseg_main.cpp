#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "octaseg/classical.hpp"
#include "octaseg/image_io.hpp"
#include "octaseg/metrics.hpp"
#include "octaseg/morphology.hpp"
#include "octaseg/network.hpp"
#include "octaseg/pipeline.hpp"
#include "octaseg/synth.hpp"

namespace fs = std::filesystem;
using namespace octaseg;

namespace {

constexpr const char* kVersionString = "octaseg 1.0.0 (checkpoint format 1)";

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::VersionMismatch:
    case ErrorCode::UnsupportedFilter:
      return 2;
    case ErrorCode::NumericAbort:
    case ErrorCode::MissingGradient:
      return 4;
    default:
      return 3;  // data errors
  }
}

struct KV {
  std::vector<std::pair<std::string, std::string>> entries;

  template <typename T>
  void add(const std::string& key, const T& value) {
    std::ostringstream os;
    os.precision(17);
    if constexpr (std::is_same_v<T, bool>) os << (value ? "true" : "false");
    else os << value;
    entries.emplace_back(key, os.str());
  }

  std::string text() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries) os << k << "=" << v << "\n";
    return os.str();
  }
};

// prints the resolved configuration and snapshots it next to the outputs, so
// a run can be reproduced from its own artifacts
void emit_config(const KV& kv, const std::string& out_dir) {
  std::cout << kv.text();
  if (!out_dir.empty()) {
    std::ofstream f(fs::path(out_dir) / "config.effective");
    f << kv.text();
  }
}

void ensure_out_dir(const std::string& out_dir) {
  if (!out_dir.empty()) fs::create_directories(out_dir);
}

// stems may carry compound suffixes like name.mask.pgm; strip the tag so
// predictions and ground truths match on the plain name
std::string base_stem(const fs::path& p) {
  std::string stem = p.stem().string();
  for (const char* tag : {".mask", ".prob", ".skel", ".resp"}) {
    const size_t tl = std::string(tag).size();
    if (stem.size() > tl && stem.compare(stem.size() - tl, tl, tag) == 0)
      return stem.substr(0, stem.size() - tl);
  }
  return stem;
}

std::map<std::string, fs::path> scan_mask_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) raise(ErrorCode::FileMissing, "no such directory: " + dir);
  std::map<std::string, fs::path> out;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext != ".png" && ext != ".pgm") continue;
    const std::string stem = base_stem(e.path());
    if (!out.emplace(stem, e.path()).second)
      raise(ErrorCode::NameMismatch, "duplicate mask stem: " + stem);
  }
  return out;
}

TileLayout layout_for(const Network<float>& net, const GrayImage& img, int tile,
                      int stride) {
  const int div =
      net.config.kind == ArchKind::CNN7 ? 1 : (1 << net.config.depth);
  int t = std::min({tile, img.height, img.width});
  t -= t % div;
  if (t < 1)
    raise(ErrorCode::ShapeMismatch, "image smaller than one resampling cell (" +
                                        std::to_string(div) + " px)");
  const int s = std::min(stride, t);
  return make_tile_layout(img.height, img.width, t, s);
}

struct TrainArgs {
  std::string data;
  int synthetic = 0;
  int synth_size = 76;
  std::string arch = "imn";
  int depth = 2;
  int width = 16;
  int steps = 300;
  double lr = 1e-4;
  int crop = 76;
  int batch_size = 1;
  int eval_every = 0;
  int n_train = 0;  // 0 = train on everything, no held-out split
  uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir = "out";
};

int cmd_train(const TrainArgs& a) {
  ensure_out_dir(a.out_dir);
  KV kv;
  kv.add("command", std::string("train"));
  kv.add("data", a.data);
  kv.add("synthetic", a.synthetic);
  kv.add("synth-size", a.synth_size);
  kv.add("arch", a.arch);
  kv.add("depth", a.depth);
  kv.add("width", a.width);
  kv.add("steps", a.steps);
  kv.add("lr", a.lr);
  kv.add("crop", a.crop);
  kv.add("batch-size", a.batch_size);
  kv.add("eval-every", a.eval_every);
  kv.add("n-train", a.n_train);
  kv.add("seed", a.seed);
  kv.add("deterministic", a.deterministic);
  kv.add("out-dir", a.out_dir);
  emit_config(kv, a.out_dir);

  std::string root = a.data;
  if (a.synthetic > 0) {
    root = (fs::path(a.out_dir) / "synth").string();
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "labels");
    for (int i = 0; i < a.synthetic; ++i) {
      auto [img, mask] =
          gen_synthetic_vessels(a.seed + uint64_t(i), a.synth_size, a.synth_size);
      char name[32];
      std::snprintf(name, sizeof(name), "synth%04d.pgm", i);
      save_gray(img, (fs::path(root) / "images" / name).string());
      save_mask(mask, (fs::path(root) / "labels" / name).string());
    }
  } else if (root.empty()) {
    raise(ErrorCode::ConfigInvalid, "either --data or --synthetic is required");
  }

  Dataset all = load_dataset(root);
  Dataset train_split = all;
  Dataset test_split;
  if (a.n_train > 0) {
    auto parts = split_dataset(all, a.n_train, a.seed);
    train_split = std::move(parts.first);
    test_split = std::move(parts.second);
  }

  ArchitectureConfig acfg;
  acfg.kind = parse_arch_kind(a.arch);
  acfg.depth = a.depth;
  acfg.width = a.width;
  acfg.seed = a.seed;
  TrainConfig tcfg;
  tcfg.lr = a.lr;
  tcfg.batch_size = a.batch_size;
  tcfg.max_steps = a.steps;
  tcfg.crop = a.crop;
  tcfg.seed = a.seed;
  tcfg.eval_every = a.eval_every;

  std::ofstream log(fs::path(a.out_dir) / "train.log.jsonl");
  if (!log) raise(ErrorCode::IoFailure, "cannot write training log in " + a.out_dir);
  const TrainRun run = train(train_split, test_split.items.empty() ? nullptr : &test_split,
                             acfg, tcfg, a.out_dir, &log);
  std::cout << "steps=" << run.loss_log.size() << "\n";
  if (!run.loss_log.empty())
    std::cout << "final_loss=" << run.loss_log.back() << "\n";
  std::cout << "checkpoint=" << run.final_checkpoint << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  int tile = 76;
  int stride = 56;
  bool prob = false;
  uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir = "out";
};

int cmd_predict(const PredictArgs& a) {
  ensure_out_dir(a.out_dir);
  KV kv;
  kv.add("command", std::string("predict"));
  kv.add("checkpoint", a.checkpoint);
  kv.add("tile", a.tile);
  kv.add("stride", a.stride);
  kv.add("prob", a.prob);
  kv.add("seed", a.seed);
  kv.add("deterministic", a.deterministic);
  kv.add("out-dir", a.out_dir);
  emit_config(kv, a.out_dir);

  Network<float> net = load_checkpoint(a.checkpoint);
  for (const std::string& input : a.inputs) {
    const GrayImage img = load_gray(input);
    const TileLayout layout = layout_for(net, img, a.tile, a.stride);
    const GrayImage prob_map = infer_prob_map(net, img, layout);
    BinaryMask mask(prob_map.height, prob_map.width);
    for (size_t i = 0; i < prob_map.values.size(); ++i)
      mask.bits[i] = prob_map.values[i] > 0.5 ? 1 : 0;
    const std::string stem = base_stem(fs::path(input));
    save_mask(mask, (fs::path(a.out_dir) / (stem + ".mask.pgm")).string());
    if (a.prob)
      save_gray(prob_map, (fs::path(a.out_dir) / (stem + ".prob.pgm")).string());
    std::cout << input << " -> " << stem << ".mask.pgm (tile " << layout.tile
              << ", stride " << layout.stride << ", " << layout.origins.size()
              << " tiles)\n";
  }
  return 0;
}

struct EvaluateArgs {
  std::string pred_dir;
  std::string gt_dir;
  double cal_radius = 2.0;
  int srec_tol = 0;
  uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir = "out";
};

int cmd_evaluate(const EvaluateArgs& a) {
  ensure_out_dir(a.out_dir);
  KV kv;
  kv.add("command", std::string("evaluate"));
  kv.add("pred", a.pred_dir);
  kv.add("gt", a.gt_dir);
  kv.add("cal-radius", a.cal_radius);
  kv.add("srec-tol", a.srec_tol);
  kv.add("seed", a.seed);
  kv.add("deterministic", a.deterministic);
  kv.add("out-dir", a.out_dir);
  emit_config(kv, a.out_dir);

  const std::map<std::string, fs::path> preds = scan_mask_dir(a.pred_dir);
  const std::map<std::string, fs::path> gts = scan_mask_dir(a.gt_dir);
  if (gts.empty()) raise(ErrorCode::EmptyInput, "no masks under " + a.gt_dir);
  for (const auto& [stem, path] : gts)
    if (!preds.count(stem))
      raise(ErrorCode::NameMismatch, "no prediction for ground truth: " + stem);
  for (const auto& [stem, path] : preds)
    if (!gts.count(stem))
      raise(ErrorCode::NameMismatch, "prediction without ground truth: " + stem);

  MetricConfig mcfg;
  mcfg.cal_radius = a.cal_radius;
  mcfg.srec_tolerance = a.srec_tol;

  std::ofstream csv(fs::path(a.out_dir) / "metrics.csv");
  std::ofstream jsonl(fs::path(a.out_dir) / "metrics.jsonl");
  csv << csv_header() << "\n";
  std::cout << csv_header() << "\n";

  std::vector<MetricsReport> reports;
  int failures = 0;
  for (const auto& [stem, gt_path] : gts) {
    try {
      const BinaryMask gt = load_mask(gt_path.string());
      const BinaryMask pred = load_mask(preds.at(stem).string());
      MetricsReport rep = evaluate_all(stem, pred, gt, mcfg);
      csv << report_to_csv_row(rep) << "\n";
      jsonl << report_to_json(rep) << "\n";
      std::cout << report_to_csv_row(rep) << "\n";
      reports.push_back(std::move(rep));
    } catch (const Error& e) {
      ++failures;
      jsonl << "{\"id\":\"" << stem << "\",\"error\":\"" << e.what() << "\"}\n";
      std::cerr << stem << ": " << e.what() << "\n";
    }
  }
  const MetricsReport mean = mean_report(reports);
  csv << report_to_csv_row(mean) << "\n";
  jsonl << report_to_json(mean) << "\n";
  std::cout << report_to_csv_row(mean) << "\n";
  return failures ? 3 : 0;
}

struct FilterArgs {
  std::string method;
  std::vector<std::string> inputs;
  int window = 0;
  double sensitivity = 15.0;
  std::vector<double> scales{1.0, 1.5, 2.0};
  double beta = 0.5;
  double frangi_c = 0.0;
  std::vector<double> wavelengths{4.0, 8.0};
  int orientations = 12;
  double sigma_ratio = 0.5;
  uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir = "out";
};

int cmd_filter(const FilterArgs& a) {
  ensure_out_dir(a.out_dir);
  KV kv;
  kv.add("command", std::string("filter"));
  kv.add("method", a.method);
  kv.add("window", a.window);
  kv.add("sensitivity", a.sensitivity);
  {
    std::ostringstream os;
    for (size_t i = 0; i < a.scales.size(); ++i) os << (i ? "," : "") << a.scales[i];
    kv.add("scales", os.str());
    std::ostringstream ow;
    for (size_t i = 0; i < a.wavelengths.size(); ++i)
      ow << (i ? "," : "") << a.wavelengths[i];
    kv.add("wavelengths", ow.str());
  }
  kv.add("beta", a.beta);
  kv.add("frangi-c", a.frangi_c);
  kv.add("orientations", a.orientations);
  kv.add("sigma-ratio", a.sigma_ratio);
  kv.add("seed", a.seed);
  kv.add("deterministic", a.deterministic);
  kv.add("out-dir", a.out_dir);
  emit_config(kv, a.out_dir);

  const FilterKind kind = parse_filter_kind(a.method);
  FrangiConfig fcfg;
  fcfg.scales = a.scales;
  fcfg.beta = a.beta;
  fcfg.c = a.frangi_c;
  GaborConfig gcfg;
  gcfg.wavelengths = a.wavelengths;
  gcfg.orientations = a.orientations;
  gcfg.sigma_ratio = a.sigma_ratio;
  ThresholdConfig tcfg;
  tcfg.window = a.window;
  tcfg.sensitivity = a.sensitivity;

  for (const std::string& input : a.inputs) {
    const GrayImage img = load_gray(input);
    GrayImage response;
    const BinaryMask mask = filter_then_threshold(img, kind, fcfg, gcfg, tcfg, &response);
    const std::string stem = base_stem(fs::path(input));
    save_gray(response, (fs::path(a.out_dir) / (stem + ".resp.pgm")).string());
    save_mask(mask, (fs::path(a.out_dir) / (stem + ".mask.pgm")).string());
    std::cout << input << " -> " << stem << ".mask.pgm\n";
  }
  return 0;
}

struct SkeletonizeArgs {
  std::vector<std::string> inputs;
  std::string checkpoint;  // empty = thin the input masks directly
  int tile = 76;
  int stride = 56;
  uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir = "out";
};

int cmd_skeletonize(const SkeletonizeArgs& a) {
  ensure_out_dir(a.out_dir);
  KV kv;
  kv.add("command", std::string("skeletonize"));
  kv.add("checkpoint", a.checkpoint);
  kv.add("tile", a.tile);
  kv.add("stride", a.stride);
  kv.add("seed", a.seed);
  kv.add("deterministic", a.deterministic);
  kv.add("out-dir", a.out_dir);
  emit_config(kv, a.out_dir);

  std::optional<Network<float>> net;
  if (!a.checkpoint.empty()) net = load_checkpoint(a.checkpoint);
  for (const std::string& input : a.inputs) {
    SkeletonMask skel;
    if (net) {
      const GrayImage img = load_gray(input);
      skel = skeleton_pipeline(*net, img, layout_for(*net, img, a.tile, a.stride));
    } else {
      skel = zhang_suen_thin(load_mask(input));
    }
    const std::string stem = base_stem(fs::path(input));
    save_mask(skel, (fs::path(a.out_dir) / (stem + ".skel.pgm")).string());
    std::cout << input << " -> " << stem << ".skel.pgm\n";
  }
  return 0;
}

// Replaces "--config FILE" in the token stream with the file's key=value
// pairs as --key=value tokens, except keys the command line already sets, so
// the precedence is defaults < file < explicit flags. Unknown keys surface as
// ordinary parse errors.
std::vector<std::string> expand_config_tokens(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  std::set<std::string> explicit_keys;
  for (size_t i = 0; i < in.size(); ++i) {
    const std::string& tok = in[i];
    if (tok.rfind("--", 0) != 0) continue;
    std::string key = tok.substr(2);
    if (const size_t eq = key.find('='); eq != std::string::npos) key.resize(eq);
    if (key != "config") explicit_keys.insert(key);
    if (tok == "--config") ++i;  // skip the file path token
  }
  for (size_t i = 0; i < in.size(); ++i) {
    std::string path;
    if (in[i] == "--config") {
      if (i + 1 >= in.size())
        raise(ErrorCode::ConfigInvalid, "--config requires a file path");
      path = in[++i];
    } else if (in[i].rfind("--config=", 0) == 0) {
      path = in[i].substr(9);
    } else {
      out.push_back(in[i]);
      continue;
    }
    std::ifstream file(path);
    if (!file) raise(ErrorCode::FileMissing, "cannot read config file: " + path);
    std::string line;
    while (std::getline(file, line)) {
      const size_t a = line.find_first_not_of(" \t\r");
      if (a == std::string::npos || line[a] == '#') continue;
      const size_t b = line.find_last_not_of(" \t\r");
      line = line.substr(a, b - a + 1);
      const size_t eq = line.find('=');
      if (eq == std::string::npos || eq == 0)
        raise(ErrorCode::ConfigInvalid, "config line is not key=value: " + line);
      const std::string key = line.substr(0, eq);
      if (explicit_keys.count(key)) continue;
      out.push_back("--" + line);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OCTA vessel segmentation toolkit"};
  app.require_subcommand(1);

  TrainArgs ta;
  static std::string config_doc;  // consumed before parsing; listed for --help
  CLI::App* t = app.add_subcommand("train", "train a segmentation network");
  t->add_option("--config", config_doc, "key=value file; explicit flags win");
  t->add_option("--data", ta.data, "dataset root with images/ and labels/");
  t->add_option("--synthetic", ta.synthetic, "generate N synthetic pairs and train on them");
  t->add_option("--synth-size", ta.synth_size, "synthetic image side length");
  t->add_option("--arch", ta.arch, "imn, unet or cnn7");
  t->add_option("--depth", ta.depth, "resampling stages");
  t->add_option("--width", ta.width, "conv channels");
  t->add_option("--steps", ta.steps, "training steps");
  t->add_option("--lr", ta.lr, "Adam learning rate");
  t->add_option("--crop", ta.crop, "training crop size");
  t->add_option("--batch-size", ta.batch_size, "crops per step");
  t->add_option("--eval-every", ta.eval_every, "evaluate every N steps (0 = never)");
  t->add_option("--n-train", ta.n_train, "train/test split size (0 = no split)");
  t->add_option("--seed", ta.seed, "PRNG seed");
  t->add_flag("--deterministic", ta.deterministic, "serial accumulation order");
  t->add_option("--out-dir", ta.out_dir, "output directory");

  PredictArgs pa;
  CLI::App* p = app.add_subcommand("predict", "segment images with a checkpoint");
  p->add_option("--config", config_doc, "key=value file; explicit flags win");
  p->add_option("--checkpoint", pa.checkpoint, "trained checkpoint")->required();
  p->add_option("inputs", pa.inputs, "input images")->required();
  p->add_option("--tile", pa.tile, "tile size");
  p->add_option("--stride", pa.stride, "tile stride");
  p->add_flag("--prob", pa.prob, "also write the probability map");
  p->add_option("--seed", pa.seed, "PRNG seed");
  p->add_flag("--deterministic", pa.deterministic, "serial accumulation order");
  p->add_option("--out-dir", pa.out_dir, "output directory");

  EvaluateArgs ea;
  CLI::App* e = app.add_subcommand("evaluate", "score predictions against ground truth");
  e->add_option("--config", config_doc, "key=value file; explicit flags win");
  e->add_option("--pred", ea.pred_dir, "directory of predicted masks")->required();
  e->add_option("--gt", ea.gt_dir, "directory of ground-truth masks")->required();
  e->add_option("--cal-radius", ea.cal_radius, "disc radius for the CAL terms");
  e->add_option("--srec-tol", ea.srec_tol, "skeleton recall tolerance radius");
  e->add_option("--seed", ea.seed, "PRNG seed");
  e->add_flag("--deterministic", ea.deterministic, "serial accumulation order");
  e->add_option("--out-dir", ea.out_dir, "output directory");

  FilterArgs fa;
  CLI::App* f = app.add_subcommand("filter", "classical enhancement + threshold");
  f->add_option("--config", config_doc, "key=value file; explicit flags win");
  f->add_option("--method", fa.method, "at, frangi, gabor or scird-ts")->required();
  f->add_option("inputs", fa.inputs, "input images")->required();
  f->add_option("--window", fa.window, "threshold window (odd; 0 = width/8)");
  f->add_option("--sensitivity", fa.sensitivity, "threshold sensitivity percent");
  f->add_option("--scales", fa.scales, "Frangi scales")->delimiter(',');
  f->add_option("--beta", fa.beta, "Frangi blobness weight");
  f->add_option("--frangi-c", fa.frangi_c, "Frangi structureness weight (0 = auto)");
  f->add_option("--wavelengths", fa.wavelengths, "Gabor wavelengths")->delimiter(',');
  f->add_option("--orientations", fa.orientations, "Gabor orientation count");
  f->add_option("--sigma-ratio", fa.sigma_ratio, "Gabor envelope sigma / wavelength");
  f->add_option("--seed", fa.seed, "PRNG seed");
  f->add_flag("--deterministic", fa.deterministic, "serial accumulation order");
  f->add_option("--out-dir", fa.out_dir, "output directory");

  SkeletonizeArgs sa;
  CLI::App* s = app.add_subcommand("skeletonize", "thin masks or segment-then-thin");
  s->add_option("--config", config_doc, "key=value file; explicit flags win");
  s->add_option("inputs", sa.inputs, "input masks (or images with --checkpoint)")
      ->required();
  s->add_option("--checkpoint", sa.checkpoint, "segment first with this checkpoint");
  s->add_option("--tile", sa.tile, "tile size");
  s->add_option("--stride", sa.stride, "tile stride");
  s->add_option("--seed", sa.seed, "PRNG seed");
  s->add_flag("--deterministic", sa.deterministic, "serial accumulation order");
  s->add_option("--out-dir", sa.out_dir, "output directory");

  CLI::App* v = app.add_subcommand("version", "print the tool and format version");

  try {
    std::vector<std::string> tokens(argv + 1, argv + argc);
    tokens = expand_config_tokens(tokens);
    std::reverse(tokens.begin(), tokens.end());
    app.parse(std::move(tokens));
    if (t->parsed()) return cmd_train(ta);
    if (p->parsed()) return cmd_predict(pa);
    if (e->parsed()) return cmd_evaluate(ea);
    if (f->parsed()) return cmd_filter(fa);
    if (s->parsed()) return cmd_skeletonize(sa);
    if (v->parsed()) {
      std::cout << kVersionString << "\n";
      return 0;
    }
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& pe) {
    std::cerr << pe.what() << "\n";
    return 2;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err.code());
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  }
  return 0;
}
