#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vpdiag/features.hpp"

namespace vpdiag {

enum class Partition { kTrain, kValid, kTest };

const char* to_string(Partition p);
Partition parse_partition(std::string_view name);

/// Anonymization conditions are plain strings: "clean", "mcadams" or
/// "external:<name>". Manifest columns are audio_<name>; the two built-in
/// names map to themselves and anything else to external:<name>.
std::string condition_from_column(std::string_view column);
std::string column_for_condition(std::string_view condition);
bool is_external_condition(std::string_view condition);

struct ManifestRow {
  std::string utterance_id;
  std::map<std::string, std::filesystem::path> audio;  ///< condition -> absolute path
  Label label = Label::kNegative;
  Partition partition = Partition::kTrain;
  std::optional<std::string> speaker_id;
  std::map<std::string, std::string> metadata;
};

struct DatasetManifest {
  std::string dataset_id;
  std::filesystem::path source;
  std::vector<ManifestRow> rows;

  std::vector<const ManifestRow*> partition(Partition p) const;
  bool has_partition(Partition p) const;
  /// Conditions with at least one audio path.
  std::vector<std::string> conditions() const;
  const ManifestRow* find(std::string_view utterance_id) const;
  /// Stable hash of the parsed contents (ids, labels, partitions, paths).
  std::string content_hash() const;
};

/// Loads a CSV (header row) or JSON ({"dataset_id", "rows": [...]}) manifest.
/// Required columns: utterance_id, label, partition and at least one audio_*
/// column; speaker_id and dataset_id are optional and any other column lands
/// in metadata. Relative paths resolve against the manifest directory; an
/// empty audio cell means the condition is not provided for that row.
/// All violations are collected into one error whose code is the first
/// present of kSchema, kDuplicateId, kDanglingPath, kSpeakerLeakage.
/// Without a dataset_id column the manifest's parent directory name is used.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes the CSV form with paths relative to the manifest directory.
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace vpdiag
