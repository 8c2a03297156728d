#include "vpdiag/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vpdiag/error.hpp"
#include "vpdiag/random.hpp"

namespace fs = std::filesystem;

namespace vpdiag {

const char* to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kValid: return "valid";
    case Partition::kTest: return "test";
  }
  return "?";
}

Partition parse_partition(std::string_view name) {
  if (name == "train") return Partition::kTrain;
  if (name == "valid" || name == "validation" || name == "dev") return Partition::kValid;
  if (name == "test") return Partition::kTest;
  throw Error(ErrorCode::kSchema, "unknown partition '" + std::string(name) + "'");
}

std::string condition_from_column(std::string_view column) {
  std::string_view name = column;
  if (name.starts_with("audio_")) name.remove_prefix(6);
  if (name == "clean" || name == "mcadams" || name.starts_with("external:")) return std::string(name);
  return "external:" + std::string(name);
}

std::string column_for_condition(std::string_view condition) {
  std::string_view name = condition;
  if (name.starts_with("external:")) name.remove_prefix(9);
  return "audio_" + std::string(name);
}

bool is_external_condition(std::string_view condition) {
  return condition.starts_with("external:") && condition.size() > 9;
}

std::vector<const ManifestRow*> DatasetManifest::partition(Partition p) const {
  std::vector<const ManifestRow*> out;
  for (const auto& row : rows) {
    if (row.partition == p) out.push_back(&row);
  }
  return out;
}

bool DatasetManifest::has_partition(Partition p) const {
  return std::any_of(rows.begin(), rows.end(), [p](const ManifestRow& r) { return r.partition == p; });
}

std::vector<std::string> DatasetManifest::conditions() const {
  std::set<std::string> names;
  for (const auto& row : rows) {
    for (const auto& [cond, path] : row.audio) names.insert(cond);
  }
  return {names.begin(), names.end()};
}

const ManifestRow* DatasetManifest::find(std::string_view utterance_id) const {
  for (const auto& row : rows) {
    if (row.utterance_id == utterance_id) return &row;
  }
  return nullptr;
}

std::string DatasetManifest::content_hash() const {
  std::uint64_t h = fnv1a(dataset_id);
  for (const auto& row : rows) {
    h = fnv1a(row.utterance_id, h);
    h = fnv1a(std::string_view(to_string(row.label)), h);
    h = fnv1a(std::string_view(to_string(row.partition)), h);
    h = fnv1a(row.speaker_id.value_or(""), h);
    for (const auto& [cond, path] : row.audio) {
      h = fnv1a(cond, h);
      h = fnv1a(path.filename().string(), h);
    }
  }
  return hex64(h);
}

namespace {

using Cells = std::map<std::string, std::string>;

struct Violations {
  std::vector<std::pair<ErrorCode, std::string>> items;
  void add(ErrorCode code, std::string message) { items.emplace_back(code, std::move(message)); }
};

std::vector<Cells> read_csv_rows(const fs::path& path, std::vector<std::string>& header) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) return {};
  header = split_csv_line(line);
  std::vector<Cells> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kSchema, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                          std::to_string(header.size()) + " cells, got " +
                                          std::to_string(cells.size()));
    }
    Cells row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Cells> read_json_rows(const fs::path& path, std::vector<std::string>& header,
                                  std::string& dataset_id) {
  nlohmann::json doc;
  try {
    std::ifstream in(path);
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("rows") || !doc["rows"].is_array()) {
    throw Error(ErrorCode::kSchema, path.string() + ": expected an object with a 'rows' array");
  }
  if (doc.contains("dataset_id")) dataset_id = doc["dataset_id"].get<std::string>();
  std::set<std::string> columns;
  std::vector<Cells> rows;
  for (const auto& item : doc["rows"]) {
    Cells row;
    for (const auto& [key, value] : item.items()) {
      if (key == "audio" && value.is_object()) {
        for (const auto& [cond, p] : value.items()) {
          row[column_for_condition(condition_from_column(cond))] = p.get<std::string>();
        }
      } else if (key == "metadata" && value.is_object()) {
        for (const auto& [mk, mv] : value.items()) {
          row[mk] = mv.is_string() ? mv.get<std::string>() : mv.dump();
        }
      } else {
        row[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
    for (const auto& [k, v] : row) columns.insert(k);
    rows.push_back(std::move(row));
  }
  header.assign(columns.begin(), columns.end());
  return rows;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kMissingFile, "manifest not found: " + path.string());
  DatasetManifest manifest;
  manifest.source = fs::absolute(path);
  std::vector<std::string> header;
  std::string json_dataset_id;
  const bool is_json = path.extension() == ".json";
  std::vector<Cells> rows = is_json ? read_json_rows(path, header, json_dataset_id)
                                    : read_csv_rows(path, header);
  const fs::path base = manifest.source.parent_path();

  Violations v;
  for (const char* col : {"utterance_id", "label", "partition"}) {
    if (std::find(header.begin(), header.end(), col) == header.end() && !(is_json && rows.empty())) {
      v.add(ErrorCode::kSchema, std::string("missing column '") + col + "'");
    }
  }
  std::vector<std::string> audio_columns;
  for (const auto& col : header) {
    if (col.starts_with("audio_") && col.size() > 6) audio_columns.push_back(col);
  }
  if (audio_columns.empty()) v.add(ErrorCode::kSchema, "no audio_<condition> column");
  if (rows.empty()) v.add(ErrorCode::kSchema, "manifest has no rows");

  std::set<std::string> dataset_ids;
  std::set<std::string> seen;
  std::map<std::string, std::set<Partition>> speaker_partitions;
  if (v.items.empty()) {
    int index = 0;
    for (const Cells& cells : rows) {
      ++index;
      ManifestRow row;
      auto cell = [&](const std::string& key) -> std::string {
        const auto it = cells.find(key);
        return it == cells.end() ? std::string() : it->second;
      };
      row.utterance_id = cell("utterance_id");
      const std::string where = "row " + std::to_string(index) +
                                (row.utterance_id.empty() ? "" : " (" + row.utterance_id + ")");
      if (row.utterance_id.empty()) {
        v.add(ErrorCode::kSchema, where + ": empty utterance_id");
        continue;
      }
      if (!seen.insert(row.utterance_id).second) {
        v.add(ErrorCode::kDuplicateId, "duplicate utterance id '" + row.utterance_id + "'");
      }
      try {
        row.label = parse_label(cell("label"));
      } catch (const Error&) {
        v.add(ErrorCode::kSchema, where + ": invalid label '" + cell("label") + "'");
      }
      try {
        row.partition = parse_partition(cell("partition"));
      } catch (const Error&) {
        v.add(ErrorCode::kSchema, where + ": invalid partition '" + cell("partition") + "'");
      }
      if (const std::string spk = cell("speaker_id"); !spk.empty()) {
        row.speaker_id = spk;
        speaker_partitions[spk].insert(row.partition);
      }
      if (const std::string ds = cell("dataset_id"); !ds.empty()) dataset_ids.insert(ds);
      for (const auto& col : audio_columns) {
        const std::string value = cell(col);
        if (value.empty()) continue;
        fs::path p(value);
        if (p.is_relative()) p = base / p;
        p = p.lexically_normal();
        if (!fs::exists(p)) {
          v.add(ErrorCode::kDanglingPath, where + ": " + col + " path does not exist: " + p.string());
        }
        row.audio[condition_from_column(col)] = p;
      }
      if (row.audio.empty()) v.add(ErrorCode::kSchema, where + ": no audio path");
      for (const auto& [key, value] : cells) {
        if (key == "utterance_id" || key == "label" || key == "partition" || key == "speaker_id" ||
            key == "dataset_id" || key.starts_with("audio_")) {
          continue;
        }
        row.metadata[key] = value;
      }
      manifest.rows.push_back(std::move(row));
    }
    for (const auto& [spk, parts] : speaker_partitions) {
      if (parts.size() > 1) {
        std::string names;
        for (Partition p : parts) names += std::string(names.empty() ? "" : ", ") + to_string(p);
        v.add(ErrorCode::kSpeakerLeakage, "speaker '" + spk + "' appears in partitions " + names);
      }
    }
    if (dataset_ids.size() > 1) v.add(ErrorCode::kSchema, "rows disagree on dataset_id");
  }

  if (!v.items.empty()) {
    ErrorCode code = v.items.front().first;
    for (ErrorCode c : {ErrorCode::kSpeakerLeakage, ErrorCode::kDanglingPath, ErrorCode::kDuplicateId,
                        ErrorCode::kSchema}) {
      if (std::any_of(v.items.begin(), v.items.end(), [c](const auto& i) { return i.first == c; })) {
        code = c;
      }
    }
    std::ostringstream msg;
    msg << path.string() << ": " << v.items.size() << " manifest violation(s)";
    for (const auto& [c, text] : v.items) msg << "\n  [" << to_string(c) << "] " << text;
    throw Error(code, msg.str());
  }

  if (!json_dataset_id.empty()) {
    manifest.dataset_id = json_dataset_id;
  } else if (!dataset_ids.empty()) {
    manifest.dataset_id = *dataset_ids.begin();
  } else {
    manifest.dataset_id = base.filename().string();
  }
  return manifest;
}

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  const std::vector<std::string> conditions = manifest.conditions();
  std::set<std::string> meta_keys;
  for (const auto& row : manifest.rows) {
    for (const auto& [k, val] : row.metadata) meta_keys.insert(k);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kUnwritablePath, "cannot write manifest: " + path.string());
  out << "utterance_id,dataset_id,speaker_id,label,partition";
  for (const auto& c : conditions) out << ',' << column_for_condition(c);
  for (const auto& k : meta_keys) out << ',' << k;
  out << '\n';
  for (const auto& row : manifest.rows) {
    out << row.utterance_id << ',' << manifest.dataset_id << ',' << row.speaker_id.value_or("") << ','
        << to_string(row.label) << ',' << to_string(row.partition);
    for (const auto& c : conditions) {
      out << ',';
      if (const auto it = row.audio.find(c); it != row.audio.end()) {
        out << it->second.lexically_relative(base).generic_string();
      }
    }
    for (const auto& k : meta_keys) {
      out << ',';
      if (const auto it = row.metadata.find(k); it != row.metadata.end()) out << it->second;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kUnwritablePath, "failed writing manifest: " + path.string());
}

}  // namespace vpdiag
