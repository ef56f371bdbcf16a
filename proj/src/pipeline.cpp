#include "octaseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>

#include "octaseg/image_io.hpp"
#include "octaseg/morphology.hpp"

namespace fs = std::filesystem;

namespace octaseg {

namespace {

bool has_image_ext(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".pgm";
}

std::map<std::string, fs::path> scan_dir(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || !has_image_ext(e.path())) continue;
    const std::string stem = e.path().stem().string();
    if (!out.emplace(stem, e.path()).second)
      raise(ErrorCode::NameMismatch, "duplicate image stem: " + stem);
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& root) {
  const fs::path images_dir = fs::path(root) / "images";
  if (!fs::is_directory(images_dir))
    raise(ErrorCode::FileMissing, "no images directory under " + root);
  const std::map<std::string, fs::path> images = scan_dir(images_dir);

  std::map<std::string, fs::path> labels;
  const fs::path labels_dir = fs::path(root) / "labels";
  if (fs::is_directory(labels_dir)) {
    labels = scan_dir(labels_dir);
    for (const auto& [stem, path] : labels)
      if (!images.count(stem))
        raise(ErrorCode::FileMissing, "label without matching image: " + stem);
  }

  Dataset ds;
  ds.source_root = root;
  for (const auto& [stem, path] : images) {
    DatasetItem item;
    item.id = stem;
    item.image = load_gray(path.string());
    const auto lab = labels.find(stem);
    if (lab != labels.end()) {
      item.label = load_mask(lab->second.string());
      if (item.label->height != item.image.height ||
          item.label->width != item.image.width)
        raise(ErrorCode::ShapeMismatch, "label dimensions differ from image: " + stem);
    }
    ds.items.push_back(std::move(item));
  }
  if (ds.items.empty()) raise(ErrorCode::EmptyInput, "no images under " + root);
  return ds;  // std::map iteration already sorted by id
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, int n_train,
                                          uint64_t seed) {
  const int n = int(ds.items.size());
  if (n_train <= 0 || n_train >= n)
    raise(ErrorCode::ConfigInvalid,
          "n_train must lie strictly between 0 and " + std::to_string(n));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  Dataset train, test;
  train.source_root = test.source_root = ds.source_root;
  for (int i = 0; i < n; ++i)
    (i < n_train ? train : test).items.push_back(ds.items[size_t(idx[size_t(i)])]);
  return {std::move(train), std::move(test)};
}

std::pair<GrayImage, BinaryMask> sample_crop(const DatasetItem& item, int crop,
                                             Rng& rng) {
  if (!item.label) raise(ErrorCode::FileMissing, "no label for image: " + item.id);
  const int h = item.image.height, w = item.image.width;
  if (crop < 1 || h < crop || w < crop)
    raise(ErrorCode::ShapeMismatch,
          "image " + item.id + " smaller than the crop size");
  const int oy = int(rng.next_below(uint64_t(h - crop + 1)));
  const int ox = int(rng.next_below(uint64_t(w - crop + 1)));
  GrayImage ci(crop, crop);
  BinaryMask cm(crop, crop);
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x) {
      ci.at(y, x) = item.image.at(oy + y, ox + x);
      cm.set(y, x, item.label->get(oy + y, ox + x));
    }
  return {std::move(ci), std::move(cm)};
}

namespace {

std::string fmt_loss(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", double(v));
  return buf;
}

// overlap metrics only: periodic eval has to stay cheap
MetricsReport eval_split(Network<float>& net, const std::vector<const DatasetItem*>& items,
                         int tile) {
  std::vector<MetricsReport> reports;
  for (const DatasetItem* it : items) {
    const TileLayout layout =
        make_tile_layout(it->image.height, it->image.width, tile, tile);
    const BinaryMask pred = infer_full_image(net, it->image, layout);
    const OverlapMetrics m = overlap_metrics(confusion(pred, *it->label));
    MetricsReport rep;
    rep.image_id = it->id;
    rep.dice = m.dice;
    rep.acc = m.acc;
    rep.rec = m.rec;
    rep.pre = m.pre;
    reports.push_back(rep);
  }
  return mean_report(reports);
}

}  // namespace

TrainRun train(const Dataset& train_ds, const Dataset* eval_ds,
               const ArchitectureConfig& acfg, const TrainConfig& tcfg,
               const std::string& out_dir, std::ostream* log) {
  if (tcfg.lr <= 0) raise(ErrorCode::ConfigInvalid, "lr must be > 0");
  if (tcfg.batch_size < 1) raise(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
  if (tcfg.max_steps < 0) raise(ErrorCode::ConfigInvalid, "max_steps must be >= 0");
  if (acfg.kind != ArchKind::CNN7 && tcfg.crop % (1 << acfg.depth) != 0)
    raise(ErrorCode::ConfigInvalid, "crop must be divisible by 2^depth");

  std::vector<const DatasetItem*> labeled;
  for (const DatasetItem& it : train_ds.items)
    if (it.label) labeled.push_back(&it);
  if (labeled.empty())
    raise(ErrorCode::EmptyInput, "training set has no labeled items");

  std::vector<const DatasetItem*> eval_items;
  if (eval_ds && tcfg.eval_every > 0)
    for (const DatasetItem& it : eval_ds->items)
      if (it.label) eval_items.push_back(&it);

  Network<float> net = build_network<float>(acfg);
  AdamConfig<float> opt;
  opt.lr = float(tcfg.lr);
  Rng rng(tcfg.seed);
  TrainRun run;
  double best_dice = -1.0;

  const int bs = tcfg.batch_size, crop = tcfg.crop;
  for (int step = 1; step <= tcfg.max_steps; ++step) {
    Tensor<float> batch = Tensor<float>::zeros({bs, 1, crop, crop});
    std::vector<uint8_t> target(size_t(bs) * crop * crop);
    for (int b = 0; b < bs; ++b) {
      const DatasetItem* it = labeled[rng.next_below(labeled.size())];
      auto [ci, cm] = sample_crop(*it, crop, rng);
      float* dst = batch.values().data() + size_t(b) * crop * crop;
      for (size_t i = 0; i < ci.values.size(); ++i) dst[i] = float(ci.values[i]);
      std::copy(cm.bits.begin(), cm.bits.end(),
                target.begin() + size_t(b) * crop * crop);
    }

    Tape<float> tape;
    Tensor<float> logits = net.forward(&tape, batch, /*training=*/true);
    Tensor<float> loss = softmax_cross_entropy(&tape, logits, target);
    const float loss_value = loss.item();
    if (!std::isfinite(double(loss_value))) {
      if (!out_dir.empty()) save_checkpoint(net, out_dir + "/last_good.ckpt");
      raise(ErrorCode::NumericAbort,
            "non-finite loss at step " + std::to_string(step));
    }
    tape.backward(loss);
    adam_step(net.params, opt);

    run.loss_log.push_back(loss_value);
    if (log)
      *log << "{\"step\":" << step << ",\"loss\":" << fmt_loss(loss_value) << "}\n";

    if (!eval_items.empty() && step % tcfg.eval_every == 0) {
      MetricsReport mean = eval_split(net, eval_items, crop);
      if (log) *log << "{\"step\":" << step << ",\"metrics\":" << report_to_json(mean)
                    << "}\n";
      if (mean.dice && *mean.dice > best_dice) {
        best_dice = *mean.dice;
        if (!out_dir.empty()) {
          run.best_checkpoint = out_dir + "/best.ckpt";
          save_checkpoint(net, run.best_checkpoint);
        }
      }
      run.eval_log.emplace_back(step, std::move(mean));
    }
  }

  if (!out_dir.empty()) {
    run.final_checkpoint = out_dir + "/final.ckpt";
    save_checkpoint(net, run.final_checkpoint);
  }
  return run;
}

TileLayout make_tile_layout(int image_h, int image_w, int tile, int stride) {
  if (tile < 1 || stride < 1 || stride > tile)
    raise(ErrorCode::ConfigInvalid, "need 1 <= stride <= tile");
  if (tile > image_h || tile > image_w)
    raise(ErrorCode::ShapeMismatch, "tile larger than image");

  auto axis = [&](int dim) {
    std::vector<int> v;
    for (int o = 0;; o += stride) {
      if (o + tile >= dim) {
        if (v.empty() || v.back() != dim - tile) v.push_back(dim - tile);
        break;
      }
      v.push_back(o);
    }
    return v;
  };

  TileLayout layout;
  layout.image_h = image_h;
  layout.image_w = image_w;
  layout.tile = tile;
  layout.stride = stride;
  for (int y : axis(image_h))
    for (int x : axis(image_w)) layout.origins.emplace_back(y, x);
  return layout;
}

GrayImage stitch_tiles(const TileLayout& layout,
                       const std::vector<std::vector<double>>& tile_values) {
  const int t = layout.tile, h = layout.image_h, w = layout.image_w;
  if (tile_values.size() != layout.origins.size())
    raise(ErrorCode::ShapeMismatch, "one value array per tile expected");
  for (const std::vector<double>& v : tile_values)
    if (v.size() != size_t(t) * t)
      raise(ErrorCode::ShapeMismatch, "tile value array has wrong size");

  std::vector<size_t> order(layout.origins.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return layout.origins[a] < layout.origins[b];
  });

  // Extended-precision accumulation keeps sum/count exact for identical
  // contributions, so stitching copies of the same tile returns it bit-exact.
  std::vector<long double> acc(size_t(h) * w, 0.0L);
  std::vector<int> cnt(size_t(h) * w, 0);
  for (size_t i : order) {
    const auto [oy, ox] = layout.origins[i];
    if (oy < 0 || ox < 0 || oy + t > h || ox + t > w)
      raise(ErrorCode::ShapeMismatch, "tile extends outside the image");
    const std::vector<double>& tv = tile_values[i];
    for (int y = 0; y < t; ++y)
      for (int x = 0; x < t; ++x) {
        const size_t j = size_t(oy + y) * w + ox + x;
        acc[j] += tv[size_t(y) * t + x];
        cnt[j] += 1;
      }
  }

  GrayImage out(h, w);
  for (size_t j = 0; j < acc.size(); ++j) {
    if (cnt[j] == 0) raise(ErrorCode::ShapeMismatch, "layout leaves pixels uncovered");
    out.values[j] = double(acc[j] / cnt[j]);
  }
  return out;
}

GrayImage infer_prob_map(Network<float>& net, const GrayImage& img,
                         const TileLayout& layout) {
  if (layout.image_h != img.height || layout.image_w != img.width)
    raise(ErrorCode::ShapeMismatch, "layout does not match image dimensions");
  const int t = layout.tile;
  std::vector<std::vector<double>> tiles;
  tiles.reserve(layout.origins.size());
  for (const auto& [oy, ox] : layout.origins) {
    Tensor<float> x = Tensor<float>::zeros({1, 1, t, t});
    float* dst = x.values().data();
    for (int y = 0; y < t; ++y)
      for (int xx = 0; xx < t; ++xx)
        dst[size_t(y) * t + xx] = float(img.at(oy + y, ox + xx));
    Tensor<float> logits = net.forward(nullptr, x, /*training=*/false);
    const std::vector<float> prob = softmax_prob1(logits);
    tiles.emplace_back(prob.begin(), prob.end());
  }
  return stitch_tiles(layout, tiles);
}

BinaryMask infer_full_image(Network<float>& net, const GrayImage& img,
                            const TileLayout& layout) {
  const GrayImage prob = infer_prob_map(net, img, layout);
  BinaryMask mask(prob.height, prob.width);
  for (size_t i = 0; i < prob.values.size(); ++i)
    mask.bits[i] = prob.values[i] > 0.5 ? 1 : 0;
  return mask;
}

SkeletonMask skeleton_pipeline(Network<float>& net, const GrayImage& img,
                               const TileLayout& layout) {
  return zhang_suen_thin(infer_full_image(net, img, layout));
}

}  // namespace octaseg
