#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "octaseg/image.hpp"
#include "octaseg/metrics.hpp"
#include "octaseg/network.hpp"
#include "octaseg/rng.hpp"

namespace octaseg {

struct DatasetItem {
  std::string id;
  GrayImage image;
  std::optional<BinaryMask> label;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::string source_root;
};

// Expects root/images/*.png|pgm and optionally root/labels/* matched by stem.
// Items come back sorted by id; a label without an image is an error, an
// image without a label is fine (inference-only data).
Dataset load_dataset(const std::string& root);

// Seeded shuffle, then the first n_train items form the train split.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, int n_train,
                                          uint64_t seed);

// Uniformly random top-left corner; image and label are cropped congruently.
std::pair<GrayImage, BinaryMask> sample_crop(const DatasetItem& item, int crop,
                                             Rng& rng);

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 1;
  double weight_decay = 0.0;  // fixed at 0; kept so configs echo completely
  int max_steps = 0;
  int crop = 76;
  uint64_t seed = 0;
  int eval_every = 0;  // 0 disables periodic evaluation
};

struct TrainRun {
  std::vector<float> loss_log;
  std::vector<std::pair<int, MetricsReport>> eval_log;
  std::string final_checkpoint;
  std::string best_checkpoint;
};

// max_steps iterations of sample_crop + train_step. When out_dir is nonempty,
// writes final.ckpt (plus best.ckpt under periodic eval, selected by mean
// Dice, and last_good.ckpt if a step aborts on a non-finite loss). log, when
// given, receives one JSON line per step and per evaluation.
TrainRun train(const Dataset& train_ds, const Dataset* eval_ds,
               const ArchitectureConfig& acfg, const TrainConfig& tcfg,
               const std::string& out_dir = "", std::ostream* log = nullptr);

struct TileLayout {
  int image_h = 0, image_w = 0;
  int tile = 76, stride = 56;
  std::vector<std::pair<int, int>> origins;  // (y, x), fully inside the image
};

// Origins at 0, stride, 2*stride, ... with the last clamped to dim - tile and
// duplicates removed, per axis. Every pixel is covered.
TileLayout make_tile_layout(int image_h, int image_w, int tile = 76, int stride = 56);

// Averages per-tile values into a full-size map; accumulation always runs in
// origin-sorted order, so the result is independent of tile order.
// tile_values[i] belongs to layout.origins[i], row-major tile x tile.
GrayImage stitch_tiles(const TileLayout& layout,
                       const std::vector<std::vector<double>>& tile_values);

// Eval-mode class-1 probability per tile, stitched by averaging.
GrayImage infer_prob_map(Network<float>& net, const GrayImage& img,
                         const TileLayout& layout);

// Stitched probability > 0.5; exact ties fall to background.
BinaryMask infer_full_image(Network<float>& net, const GrayImage& img,
                            const TileLayout& layout);

// Segment first, then thin.
SkeletonMask skeleton_pipeline(Network<float>& net, const GrayImage& img,
                               const TileLayout& layout);

}  // namespace octaseg
