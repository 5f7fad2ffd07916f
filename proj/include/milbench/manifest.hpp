#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "milbench/labels.hpp"
#include "milbench/tiler.hpp"

namespace milbench {

/// One line of a tile manifest:
/// `slide_id,patient_id,label,row,col,darkness,rank,tile_path`.
struct ManifestRow {
  std::string slide_id;
  std::string patient_id;
  std::optional<ClassLabel> label;
  TileRecord record;
  /// Relative to the manifest's directory.
  std::string tile_path;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

/// `<slide_id>_<rank>.png`
std::string tile_file_name(const std::string& slide_id, int rank);

/// "%.6f"
std::string format_darkness(double darkness);

std::vector<ManifestRow> manifest_rows(const std::vector<TileBag>& bags);
std::string render_manifest(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest(const std::string& text);

/// Writes the CSV at `path` and every tile as a PNG next to it.
void write_manifest(const std::vector<TileBag>& bags, const std::filesystem::path& path);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

/// Rebuilds bags (tiles included) from a manifest and its PNG files,
/// grouping rows by slide_id in order of first appearance.
std::vector<TileBag> load_bags(const std::filesystem::path& manifest_path);

/// Splits one CSV line on commas. No quoting: ids must not contain ',' or newlines.
std::vector<std::string> split_csv_line(const std::string& line);

/// Lines of a LF-terminated text file with an optional trailing CR stripped.
std::vector<std::string> split_lines(const std::string& text);

}  // namespace milbench
