#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "scenecap/scene_graph.hpp"
#include "scenecap/util.hpp"

namespace scenecap {

/// Caption token inventory. Ids 0..3 are reserved; real tokens start at 4,
/// ordered by descending corpus frequency, then lexicographically.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_token;  // includes the four reserved entries
  std::unordered_map<std::string, int> token_to_id;
  int max_len = 16;  // caption truncation length (tokens, before BOS/EOS)

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  uint64_t content_hash() const;
};

/// Lowercase + whitespace tokenization; the only text preprocessing applied.
std::vector<std::string> tokenize(const std::string& text);

/// Tokens occurring at least min_count times enter the vocabulary.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& captions,
                            int min_count = 5, int max_len = 16);

/// [BOS] + token ids (UNK for unknown), truncated to vocab.max_len, + [EOS].
std::vector<int> encode_caption(const Vocabulary& vocab, const std::vector<std::string>& tokens);

/// Inverse of encode for in-vocabulary tokens; reserved ids are dropped.
std::vector<std::string> decode_caption(const Vocabulary& vocab, const std::vector<int>& ids);

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& path, int max_len = 16);

/// One category-label inventory (objects, attributes, or relations).
struct LabelSpace {
  std::vector<std::string> id_to_label;
  std::unordered_map<std::string, int> label_to_id;

  int size() const { return static_cast<int>(id_to_label.size()); }
  bool contains(const std::string& label) const { return label_to_id.count(label) > 0; }
  int id_of(const std::string& label) const;  // throws on unknown
};

/// Label vocabularies for the three unit categories. The attribute space
/// reserves id 0 for the padding label.
struct LabelSpaces {
  LabelSpace objects;
  LabelSpace attributes;  // id 0 = "<no-attr>"
  LabelSpace relations;

  static LabelSpaces from_lists(std::vector<std::string> objects,
                                std::vector<std::string> attributes,
                                std::vector<std::string> relations);
};

/// Collects label strings from detection documents into canonical
/// (lexicographically sorted) label spaces.
LabelSpaces scan_label_spaces(const std::vector<std::filesystem::path>& detection_files);

void save_label_spaces(const std::filesystem::path& path, const LabelSpaces& labels);
LabelSpaces load_label_spaces(const std::filesystem::path& path);

/// Detection document I/O. `expected_feature_dim` < 0 accepts any length
/// (but still requires consistency within the file). With strict = true,
/// unknown labels are errors; otherwise unknown attribute labels map to the
/// padding label and unknown-predicate relations are skipped.
SceneDetections load_detections(const std::filesystem::path& path, const LabelSpaces& labels,
                                int expected_feature_dim = -1, bool strict = true);
std::string detections_to_json(const SceneDetections& dets, const LabelSpaces& labels);
SceneDetections detections_from_json(const std::string& text, const LabelSpaces& labels,
                                     int expected_feature_dim = -1, bool strict = true,
                                     const std::string& source_name = "<memory>");

struct DatasetEntry {
  SceneDetections detections;
  std::vector<std::vector<std::string>> captions;  // tokenized references
};

struct Dataset {
  std::string split;  // train / val / test
  std::vector<DatasetEntry> entries;
};

/// Toy-world generator configuration. The world is a fixed inventory of
/// shape labels, color attributes, and layout-derived spatial predicates on
/// a small canvas; appearance features are anchored per shape label so that
/// object units carry real signal.
struct SynthConfig {
  int feature_dim = 32;
  int min_objects = 2;
  int max_objects = 5;
  double canvas_w = 64.0;
  double canvas_h = 64.0;
  double min_box = 10.0;
  double max_box = 28.0;
  double feature_noise = 0.1;
  int captions_per_image = 2;
};

/// The synthetic world's fixed label spaces.
LabelSpaces synth_label_spaces();

/// Deterministic scene-caption corpus: same (seed, n_images, cfg) gives an
/// identical dataset. Captions are a pure function of scene content.
Dataset synth_generate(uint64_t seed, int n_images, const SynthConfig& cfg);

/// Captions-file round trip: JSON list of {"image_id", "captions": [...]}.
void save_captions(const std::filesystem::path& path, const Dataset& data);
std::vector<std::pair<int, std::vector<std::string>>> load_captions(
    const std::filesystem::path& path);

/// Loads a dataset directory (captions.json + detections/det_XXXXXX.json).
Dataset load_dataset(const std::filesystem::path& dir, const LabelSpaces& labels,
                     int expected_feature_dim = -1, bool strict = true);

/// Canonical detection-file name for an image id.
std::string detection_file_name(int image_id);

}  // namespace scenecap
