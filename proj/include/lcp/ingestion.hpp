#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcp/trajectory.hpp"

namespace lcp {

enum class DatasetProfile { HighD, ExiD, Custom };

std::string_view to_string(DatasetProfile p);
DatasetProfile parse_profile(std::string_view s);

/// Affine unit conversion: normalized = scale * raw + offset.
struct Conversion {
  double scale = 1.0;
  double offset = 0.0;
};

/// Maps normalized field names to source columns, with unit conversions and
/// sentinel values that mean "absent". Loaded from a JSON data file so dataset
/// schemas can change without recompiling.
struct ColumnMapping {
  DatasetProfile profile = DatasetProfile::Custom;
  std::map<std::string, std::string> recording_meta;  // recording_id, location_id, f_s, speed_limit, ...
  std::map<std::string, std::string> track_meta;      // track_id, length, width, vehicle_class, driving_direction
  std::map<std::string, std::string> tracks;          // frame, track_id, x, y, vx, ...
  std::map<std::string, Conversion> conversions;      // keyed by normalized field
  std::map<std::string, std::vector<double>> sentinels;
  bool top_left_reference = false;  // positions are bounding-box corners
  bool flip_by_direction = false;   // highD image axes -> road-aligned frame
  bool markings_geometry = true;    // lane geometry from meta marking columns; else external JSON

  /// Throws MissingColumn when a required normalized field has no source column.
  void validate() const;
};

ColumnMapping load_column_mapping(const std::filesystem::path& path);
/// Bundled mapping for a profile from the data directory (data/mappings/<profile>.json).
ColumnMapping default_column_mapping(DatasetProfile profile, const std::filesystem::path& data_dir);
/// Parses a unit conversion spec: {"scale":..,"offset":..} or {"unit":"km/h"}.
Conversion parse_conversion(const std::string& json_text);

struct Recording {
  int recording_id = 0;
  int location_id = 0;
  double f_s = 25.0;
  LaneGeometry geometry;
  std::vector<ValidatedTrack> tracks;

  const ValidatedTrack* find(int track_id) const;
};

/// Lanes between consecutive boundaries (given in ascending lateral order,
/// right to left). Lane ids start at `first_id` and advance by `id_step`.
std::vector<Lane> lanes_from_boundaries(const std::vector<double>& boundaries, int first_id, int id_step);

/// Raw recording metadata relevant to geometry, as read from the meta file.
struct RecordingMeta {
  int recording_id = 0;
  int location_id = 0;
  double f_s = 25.0;
  std::optional<double> speed_limit;
  std::vector<double> upper_markings;  // raw lateral coordinates
  std::vector<double> lower_markings;
};

LaneGeometry build_lane_geometry(const RecordingMeta& meta, DatasetProfile profile);

Recording load_recording(const std::filesystem::path& meta_path, const std::filesystem::path& tracks_meta_path,
                         const std::filesystem::path& tracks_path, const ColumnMapping& mapping,
                         const std::optional<std::filesystem::path>& geometry_path = std::nullopt);

// Normalized on-disk format: recording_<id>.csv plus recording_<id>.json.

std::vector<std::string> normalized_header();
void write_normalized(const Recording& rec, const std::filesystem::path& dir);
Recording read_normalized(const std::filesystem::path& csv_path, const std::filesystem::path& json_path);
/// Loads every recording in a directory, ordered by recording id.
std::vector<Recording> load_normalized_dir(const std::filesystem::path& dir);

/// Lane geometry (and ramps) as JSON text, used by the sidecar and by the
/// external-geometry input of exiD-style profiles.
std::string geometry_to_json(const LaneGeometry& g);
LaneGeometry geometry_from_json(const std::string& text);

}  // namespace lcp
