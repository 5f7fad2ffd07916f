#include "milbench/tiler.hpp"

#include <algorithm>
#include <cstdint>

#include "milbench/errors.hpp"
#include "milbench/image_io.hpp"
#include "milbench/parallel.hpp"

namespace milbench {

namespace {

constexpr std::uint8_t kWhite = 255;

struct GridShape {
  int rows = 0;
  int cols = 0;
};

GridShape grid_shape(const Image& image, const TilerConfig& cfg) {
  const int ts = cfg.tile_size;
  if (cfg.edge_policy == EdgePolicy::PadWhite) {
    return {(image.height + ts - 1) / ts, (image.width + ts - 1) / ts};
  }
  return {image.height / ts, image.width / ts};
}

bool darker_first(const TileRecord& a, const TileRecord& b) {
  if (a.darkness != b.darkness) return a.darkness > b.darkness;
  if (a.row != b.row) return a.row < b.row;
  return a.col < b.col;
}

struct Span1D {
  int src;
  int dst;
  std::int64_t weight;
};

// Source/destination overlaps for box-resampling s -> t pixels along one
// axis. Coordinates are scaled by s*t so every overlap is an integer and
// the weights reaching each destination pixel sum to s.
std::vector<Span1D> box_spans(int s, int t) {
  std::vector<Span1D> spans;
  for (int o = 0; o < t; ++o) {
    const std::int64_t lo = static_cast<std::int64_t>(o) * s;
    const std::int64_t hi = lo + s;
    for (std::int64_t i = lo / t; i * t < hi; ++i) {
      const std::int64_t overlap = std::min((i + 1) * t, hi) - std::max(i * t, lo);
      if (overlap > 0) spans.push_back({static_cast<int>(i), o, overlap});
    }
  }
  return spans;
}

}  // namespace

EdgePolicy parse_edge_policy(const std::string& s) {
  if (s == "pad_white") return EdgePolicy::PadWhite;
  if (s == "discard_partial") return EdgePolicy::DiscardPartial;
  throw ArgumentError("unknown edge policy '" + s + "' (expected pad_white or discard_partial)");
}

std::string to_string(EdgePolicy p) {
  return p == EdgePolicy::PadWhite ? "pad_white" : "discard_partial";
}

void TilerConfig::validate() const {
  if (tile_size <= 0) throw ArgumentError("tile_size must be positive");
  if (bag_size <= 0) throw ArgumentError("bag_size must be positive");
  if (model_input_size <= 0 || model_input_size > tile_size) {
    throw ArgumentError("model_input_size must be in [1, tile_size]");
  }
  if (darkness_downsample <= 0) throw ArgumentError("darkness_downsample must be positive");
}

SlideImage load_slide(const std::filesystem::path& path, std::string slide_id, std::string patient_id,
                      std::optional<ClassLabel> label) {
  if (patient_id.empty()) throw ArgumentError("patient_id must be non-empty for slide '" + slide_id + "'");
  SlideImage slide{std::move(slide_id), std::move(patient_id), label, read_image(path)};
  return slide;
}

double tile_darkness(const Image& slide, int row, int col, int tile_size, int stride) {
  const int x0 = col * tile_size;
  const int y0 = row * tile_size;
  const int samples_per_axis = (tile_size + stride - 1) / stride;
  const std::uint64_t total = static_cast<std::uint64_t>(samples_per_axis) * samples_per_axis;

  // Samples inside the slide; everything else is virtual white padding.
  const int x_end = std::min(x0 + tile_size, slide.width);
  const int y_end = std::min(y0 + tile_size, slide.height);
  const int nx = x_end > x0 ? (x_end - x0 + stride - 1) / stride : 0;
  const int ny = y_end > y0 ? (y_end - y0 + stride - 1) / stride : 0;

  std::uint64_t sum = 0;
  for (int j = 0; j < ny; ++j) {
    const std::uint8_t* px = &slide.pixels[slide.index(x0, y0 + j * stride)];
    std::uint32_t row_sum = 0;
    if (stride == 1) {
      for (int k = 0; k < nx * Image::kChannels; ++k) row_sum += px[k];
    } else {
      for (int i = 0; i < nx; ++i) {
        const std::uint8_t* p = px + static_cast<std::size_t>(i) * stride * Image::kChannels;
        row_sum += static_cast<std::uint32_t>(p[0]) + p[1] + p[2];
      }
    }
    sum += row_sum;
  }
  const std::uint64_t padded = total - static_cast<std::uint64_t>(nx) * ny;
  sum += padded * kWhite * Image::kChannels;
  return 255.0 - static_cast<double>(sum) / static_cast<double>(total * Image::kChannels);
}

std::vector<TileRecord> grid_tiles(const SlideImage& slide, const TilerConfig& cfg, int jobs) {
  cfg.validate();
  if (!slide.image.valid()) throw ArgumentError("slide '" + slide.slide_id + "' has an invalid raster");
  const GridShape grid = grid_shape(slide.image, cfg);
  if (grid.rows == 0 || grid.cols == 0) {
    throw EmptyGridError("slide '" + slide.slide_id + "' is smaller than one " +
                         std::to_string(cfg.tile_size) + "px tile");
  }

  std::vector<TileRecord> records(static_cast<std::size_t>(grid.rows) * grid.cols);
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const int row = static_cast<int>(i) / grid.cols;
    const int col = static_cast<int>(i) % grid.cols;
    records[i] = {slide.slide_id, row, col,
                  tile_darkness(slide.image, row, col, cfg.tile_size, cfg.darkness_downsample), 0};
  });

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return darker_first(records[a], records[b]); });
  for (std::size_t r = 0; r < order.size(); ++r) records[order[r]].rank = static_cast<int>(r);
  return records;
}

std::vector<TileRecord> select_top_k(const std::vector<TileRecord>& records, int k) {
  if (k <= 0) throw ArgumentError("select_top_k: K must be positive");
  if (records.empty()) throw ArgumentError("select_top_k: no records");
  std::vector<TileRecord> sorted = records;
  const auto take = std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(k));
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(take), sorted.end(),
                    darker_first);

  std::vector<TileRecord> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    TileRecord r = sorted[static_cast<std::size_t>(i) % take];
    r.rank = i;
    out.push_back(std::move(r));
  }
  return out;
}

Image extract_tile(const Image& slide, int row, int col, int tile_size) {
  Image tile(tile_size, tile_size, kWhite);
  const int x0 = col * tile_size;
  const int y0 = row * tile_size;
  const int w = std::max(0, std::min(tile_size, slide.width - x0));
  const int h = std::max(0, std::min(tile_size, slide.height - y0));
  for (int y = 0; y < h; ++y) {
    const auto* src = &slide.pixels[slide.index(x0, y0 + y)];
    std::copy(src, src + static_cast<std::size_t>(w) * Image::kChannels, &tile.pixels[tile.index(0, y)]);
  }
  return tile;
}

Image resize_tile(const Image& tile, int target) {
  if (tile.width != tile.height) throw ArgumentError("resize_tile: tile must be square");
  const int s = tile.width;
  if (target <= 0 || target > s) throw ArgumentError("resize_tile: target must be in [1, source]");
  if (target == s) return tile;

  constexpr int C = Image::kChannels;
  const std::vector<Span1D> spans = box_spans(s, target);

  // Horizontal pass: s rows x target cols, weighted sums (<= 255 * s).
  std::vector<std::uint32_t> horiz(static_cast<std::size_t>(s) * target * C, 0);
  for (int y = 0; y < s; ++y) {
    const std::uint8_t* src = &tile.pixels[tile.index(0, y)];
    std::uint32_t* dst = &horiz[static_cast<std::size_t>(y) * target * C];
    for (const Span1D& sp : spans) {
      const auto w = static_cast<std::uint32_t>(sp.weight);
      for (int c = 0; c < C; ++c) dst[sp.dst * C + c] += w * src[sp.src * C + c];
    }
  }

  // Vertical pass: weighted sums (<= 255 * s^2), then divide by s^2.
  std::vector<std::uint64_t> acc(static_cast<std::size_t>(target) * target * C, 0);
  for (const Span1D& sp : spans) {
    const std::uint32_t* src = &horiz[static_cast<std::size_t>(sp.src) * target * C];
    std::uint64_t* dst = &acc[static_cast<std::size_t>(sp.dst) * target * C];
    const auto w = static_cast<std::uint64_t>(sp.weight);
    for (int k = 0; k < target * C; ++k) dst[k] += w * src[k];
  }

  Image out(target, target);
  const std::int64_t area = static_cast<std::int64_t>(s) * s;
  for (std::size_t k = 0; k < acc.size(); ++k) {
    out.pixels[k] = static_cast<std::uint8_t>(round_half_up_div(static_cast<std::int64_t>(acc[k]), area));
  }
  return out;
}

TileBag build_bag(const SlideImage& slide, const TilerConfig& cfg, int jobs) {
  const std::vector<TileRecord> grid = grid_tiles(slide, cfg, jobs);
  const std::vector<TileRecord> selected = select_top_k(grid, cfg.bag_size);
  TileBag bag{slide.slide_id, slide.patient_id, slide.label, {}, selected, grid.size()};
  bag.tiles.resize(selected.size());
  parallel_for(selected.size(), jobs, [&](std::size_t i) {
    bag.tiles[i] = resize_tile(extract_tile(slide.image, selected[i].row, selected[i].col, cfg.tile_size),
                               cfg.model_input_size);
  });
  return bag;
}

}  // namespace milbench
