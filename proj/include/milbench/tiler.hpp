#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "milbench/image.hpp"
#include "milbench/labels.hpp"

namespace milbench {

struct SlideImage {
  std::string slide_id;
  std::string patient_id;
  std::optional<ClassLabel> label;
  Image image;

  int width() const { return image.width; }
  int height() const { return image.height; }
};

enum class EdgePolicy { PadWhite, DiscardPartial };

EdgePolicy parse_edge_policy(const std::string& s);
std::string to_string(EdgePolicy p);

struct TilerConfig {
  int tile_size = 1024;
  int bag_size = 16;
  int model_input_size = 384;
  EdgePolicy edge_policy = EdgePolicy::PadWhite;
  /// Score every n-th pixel in both axes. Selection is unaffected only when
  /// n = 1; the default trades exactness for throughput on large slides.
  int darkness_downsample = 4;

  void validate() const;
};

struct TileRecord {
  std::string slide_id;
  int row = 0;
  int col = 0;
  /// 255 - mean(R, G, B) over the (possibly white-padded) tile.
  double darkness = 0.0;
  int rank = 0;

  friend bool operator==(const TileRecord&, const TileRecord&) = default;
};

struct TileBag {
  std::string slide_id;
  std::string patient_id;
  std::optional<ClassLabel> label;
  /// K tiles of model_input_size^2, darkest first.
  std::vector<Image> tiles;
  std::vector<TileRecord> records;
  /// Grid cells scored while building the bag (0 when loaded from disk).
  std::size_t grid_cells = 0;
};

SlideImage load_slide(const std::filesystem::path& path, std::string slide_id, std::string patient_id,
                      std::optional<ClassLabel> label);

/// Darkness of the tile at grid cell (row, col); pixels beyond the slide
/// edge count as white. `stride` samples every stride-th pixel per axis.
double tile_darkness(const Image& slide, int row, int col, int tile_size, int stride);

/// One record per grid cell in row-major order. `rank` is each cell's
/// position in descending-darkness order (ties by row, then col).
std::vector<TileRecord> grid_tiles(const SlideImage& slide, const TilerConfig& cfg, int jobs = 1);

/// Exactly k records, darkest first; cycles from the darkest again when
/// fewer than k records exist. `rank` is rewritten to the bag position.
std::vector<TileRecord> select_top_k(const std::vector<TileRecord>& records, int k);

/// Copies grid cell (row, col) out of the slide, padding with white.
Image extract_tile(const Image& slide, int row, int col, int tile_size);

/// Area-average (box) downsampling of a square tile, rounded half-up.
Image resize_tile(const Image& tile, int target);

/// grid_tiles -> select_top_k -> extract_tile -> resize_tile. The result is a
/// pure function of the slide and config; `jobs` only changes speed.
TileBag build_bag(const SlideImage& slide, const TilerConfig& cfg, int jobs = 1);

}  // namespace milbench
