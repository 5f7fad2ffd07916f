#include "milbench/manifest.hpp"

#include <charconv>
#include <cstdio>
#include <map>

#include "milbench/binio.hpp"
#include "milbench/errors.hpp"
#include "milbench/image_io.hpp"

namespace milbench {

namespace {

constexpr const char* kHeader = "slide_id,patient_id,label,row,col,darkness,rank,tile_path";

void check_field(const std::string& value, const char* what) {
  if (value.find_first_of(",\r\n") != std::string::npos) {
    throw ArgumentError(std::string(what) + " '" + value + "' contains a CSV delimiter");
  }
}

int parse_int(const std::string& s, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("manifest line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("manifest line " + std::to_string(line) + ": bad number '" + s + "'");
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  return lines;
}

std::string tile_file_name(const std::string& slide_id, int rank) {
  return slide_id + "_" + std::to_string(rank) + ".png";
}

std::string format_darkness(double darkness) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", darkness);
  return buf;
}

std::vector<ManifestRow> manifest_rows(const std::vector<TileBag>& bags) {
  std::vector<ManifestRow> rows;
  for (const TileBag& bag : bags) {
    for (const TileRecord& r : bag.records) {
      rows.push_back({bag.slide_id, bag.patient_id, bag.label, r, tile_file_name(bag.slide_id, r.rank)});
    }
  }
  return rows;
}

std::string render_manifest(const std::vector<ManifestRow>& rows) {
  std::string out = std::string(kHeader) + "\n";
  for (const ManifestRow& r : rows) {
    check_field(r.slide_id, "slide_id");
    check_field(r.patient_id, "patient_id");
    check_field(r.tile_path, "tile_path");
    out += r.slide_id + "," + r.patient_id + "," + label_to_string(r.label) + "," +
           std::to_string(r.record.row) + "," + std::to_string(r.record.col) + "," +
           format_darkness(r.record.darkness) + "," + std::to_string(r.record.rank) + "," + r.tile_path + "\n";
  }
  return out;
}

std::vector<ManifestRow> parse_manifest(const std::string& text) {
  const std::vector<std::string> lines = split_lines(text);
  if (lines.empty() || lines[0] != kHeader) throw ValidationError("manifest: missing or unexpected header");
  std::vector<ManifestRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 8) {
      throw ValidationError("manifest line " + std::to_string(i + 1) + ": expected 8 fields, got " +
                            std::to_string(f.size()));
    }
    ManifestRow row;
    row.slide_id = f[0];
    row.patient_id = f[1];
    row.label = parse_label(f[2]);
    row.record = {f[0], parse_int(f[3], i + 1), parse_int(f[4], i + 1), parse_double(f[5], i + 1),
                  parse_int(f[6], i + 1)};
    row.tile_path = f[7];
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const std::vector<TileBag>& bags, const std::filesystem::path& path) {
  if (bags.empty()) throw ArgumentError("write_manifest: no bags");
  const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : ".";
  for (const TileBag& bag : bags) {
    if (bag.tiles.size() != bag.records.size()) {
      throw ArgumentError("write_manifest: bag '" + bag.slide_id + "' has mismatched tiles and records");
    }
  }
  const std::string text = render_manifest(manifest_rows(bags));
  for (const TileBag& bag : bags) {
    for (std::size_t i = 0; i < bag.tiles.size(); ++i) {
      write_png(dir / tile_file_name(bag.slide_id, bag.records[i].rank), bag.tiles[i]);
    }
  }
  binio::write_text(path, text);
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

std::vector<TileBag> load_bags(const std::filesystem::path& manifest_path) {
  const auto rows = read_manifest(manifest_path);
  const std::filesystem::path dir = manifest_path.has_parent_path() ? manifest_path.parent_path() : ".";
  std::vector<TileBag> bags;
  std::map<std::string, std::size_t> index;
  for (const ManifestRow& row : rows) {
    auto [it, inserted] = index.try_emplace(row.slide_id, bags.size());
    if (inserted) bags.push_back({row.slide_id, row.patient_id, row.label, {}, {}, 0});
    TileBag& bag = bags[it->second];
    bag.records.push_back(row.record);
    bag.tiles.push_back(read_image(dir / row.tile_path));
  }
  return bags;
}

}  // namespace milbench
