#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "scenecap/corpus.hpp"

using namespace scenecap;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("scenecap_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_detections(const SceneDetections& a, const SceneDetections& b) {
  if (a.image_id != b.image_id || a.objects.size() != b.objects.size() ||
      a.relations.size() != b.relations.size())
    return false;
  for (size_t i = 0; i < a.objects.size(); ++i) {
    const auto& x = a.objects[i];
    const auto& y = b.objects[i];
    if (x.id != y.id || x.label_id != y.label_id || x.score != y.score) return false;
    if (x.box.cx != y.box.cx || x.box.cy != y.box.cy || x.box.w != y.box.w ||
        x.box.h != y.box.h)
      return false;
    if (x.appearance != y.appearance) return false;
    if (x.attributes.size() != y.attributes.size()) return false;
    for (size_t k = 0; k < x.attributes.size(); ++k)
      if (x.attributes[k].label_id != y.attributes[k].label_id ||
          x.attributes[k].score != y.attributes[k].score)
        return false;
  }
  for (size_t i = 0; i < a.relations.size(); ++i) {
    const auto& x = a.relations[i];
    const auto& y = b.relations[i];
    if (x.subject_id != y.subject_id || x.object_id != y.object_id ||
        x.predicate_id != y.predicate_id || x.score != y.score)
      return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("vocabulary frequency threshold") {
  std::vector<std::vector<std::string>> captions;
  for (int i = 0; i < 5; ++i) captions.push_back({"cat"});
  for (int i = 0; i < 4; ++i) captions.push_back({"dax"});
  Vocabulary vocab = build_vocabulary(captions, 5, 16);
  CHECK(vocab.token_to_id.count("cat") == 1);
  CHECK(vocab.token_to_id.count("dax") == 0);
  CHECK(vocab.id_of("dax") == Vocabulary::kUnk);
}

TEST_CASE("captions are truncated to max_len before wrapping") {
  std::vector<std::vector<std::string>> captions;
  std::vector<std::string> longcap;
  for (int i = 0; i < 20; ++i) longcap.push_back("w" + std::to_string(i));
  for (int r = 0; r < 5; ++r) captions.push_back(longcap);
  Vocabulary vocab = build_vocabulary(captions, 5, 16);
  std::vector<int> ids = encode_caption(vocab, longcap);
  CHECK(ids.size() == 16 + 2);
  CHECK(ids.front() == Vocabulary::kBos);
  CHECK(ids.back() == Vocabulary::kEos);
}

TEST_CASE("empty tokens never enter the vocabulary") {
  std::vector<std::vector<std::string>> captions(6, {"", "dog", ""});
  Vocabulary vocab = build_vocabulary(captions, 1, 16);
  CHECK(vocab.token_to_id.count("") == 0);
  CHECK(vocab.token_to_id.count("dog") == 1);
}

TEST_CASE("encode examples") {
  // Force "cat" to land on id 7: three more-frequent tokens occupy 4..6.
  std::vector<std::vector<std::string>> captions;
  for (int i = 0; i < 9; ++i) captions.push_back({"aa", "bb", "cc"});
  for (int i = 0; i < 5; ++i) captions.push_back({"cat"});
  Vocabulary vocab = build_vocabulary(captions, 5, 16);
  REQUIRE(vocab.id_of("cat") == 7);
  CHECK(encode_caption(vocab, {}) == std::vector<int>{Vocabulary::kBos, Vocabulary::kEos});
  CHECK(encode_caption(vocab, {"cat"}) == std::vector<int>{1, 7, 2});
}

TEST_CASE("encode/decode round trip for in-vocabulary captions") {
  Rng rng(3);
  std::vector<std::vector<std::string>> captions;
  std::vector<std::string> words = {"red", "dog", "sat", "on", "mat", "blue"};
  for (int i = 0; i < 40; ++i) {
    std::vector<std::string> cap;
    int len = static_cast<int>(rng.uniform_int(1, 8));
    for (int k = 0; k < len; ++k)
      cap.push_back(words[static_cast<size_t>(rng.uniform_int(0, 5))]);
    captions.push_back(cap);
  }
  Vocabulary vocab = build_vocabulary(captions, 1, 16);
  for (const auto& cap : captions)
    CHECK(decode_caption(vocab, encode_caption(vocab, cap)) == cap);
}

TEST_CASE("vocabulary ids are order-independent") {
  std::vector<std::vector<std::string>> captions = {
      {"zeta", "alpha"}, {"alpha"}, {"mid", "mid"}, {"zeta"}, {"alpha", "mid"}};
  Vocabulary a = build_vocabulary(captions, 1, 16);
  std::reverse(captions.begin(), captions.end());
  Vocabulary b = build_vocabulary(captions, 1, 16);
  CHECK(a.id_to_token == b.id_to_token);
  CHECK(a.content_hash() == b.content_hash());
}

TEST_CASE("vocabulary file round trip") {
  std::vector<std::vector<std::string>> captions(6, {"dog", "cat", "dog"});
  Vocabulary vocab = build_vocabulary(captions, 1, 16);
  fs::path dir = temp_dir("vocab");
  save_vocabulary(dir / "vocab.txt", vocab);
  Vocabulary loaded = load_vocabulary(dir / "vocab.txt", 16);
  CHECK(loaded.id_to_token == vocab.id_to_token);
  CHECK(loaded.content_hash() == vocab.content_hash());
}

TEST_CASE("detection documents: load errors") {
  LabelSpaces labels = synth_label_spaces();
  SUBCASE("minimal valid document") {
    std::string doc = R"({
      "image": {"id": 3, "width": 10, "height": 10},
      "objects": [{"id": 0, "box": [5, 5, 2, 2], "label": "circle", "score": 0.9,
                   "feature": [1, 2], "attributes": [{"label": "red", "score": 0.8}]}],
      "relationships": []
    })";
    SceneDetections dets = detections_from_json(doc, labels, 2, true);
    CHECK(dets.image_id == 3);
    REQUIRE(dets.objects.size() == 1);
    CHECK(dets.objects[0].label_id == labels.objects.id_of("circle"));
  }
  SUBCASE("dangling relationship reference") {
    std::string doc = R"({
      "image": {"id": 3, "width": 10, "height": 10},
      "objects": [{"id": 0, "box": [5, 5, 2, 2], "label": "circle", "score": 0.9,
                   "feature": [1, 2], "attributes": []}],
      "relationships": [{"subject": 0, "object": 4, "predicate": "above", "score": 0.5}]
    })";
    CHECK_THROWS_WITH_AS(detections_from_json(doc, labels, 2, true),
                         doctest::Contains("missing object id"), Error);
  }
  SUBCASE("feature length mismatch") {
    std::string doc = R"({
      "image": {"id": 3, "width": 10, "height": 10},
      "objects": [{"id": 0, "box": [5, 5, 2, 2], "label": "circle", "score": 0.9,
                   "feature": [1, 2, 3], "attributes": []}],
      "relationships": []
    })";
    CHECK_THROWS_WITH_AS(detections_from_json(doc, labels, 2, true),
                         doctest::Contains("feature length 3"), Error);
  }
  SUBCASE("unknown label in strict mode") {
    std::string doc = R"({
      "image": {"id": 3, "width": 10, "height": 10},
      "objects": [{"id": 0, "box": [5, 5, 2, 2], "label": "zeppelin", "score": 0.9,
                   "feature": [1, 2], "attributes": []}],
      "relationships": []
    })";
    CHECK_THROWS_WITH_AS(detections_from_json(doc, labels, 2, true),
                         doctest::Contains("unknown object label 'zeppelin'"), Error);
  }
  SUBCASE("malformed JSON") {
    CHECK_THROWS_WITH_AS(detections_from_json("{nope", labels, 2, true, "bad.json"),
                         doctest::Contains("malformed JSON"), Error);
  }
}

TEST_CASE("detection serialization round trip preserves all fields") {
  SynthConfig cfg;
  cfg.feature_dim = 8;
  Dataset data = synth_generate(77, 6, cfg);
  LabelSpaces labels = synth_label_spaces();
  for (const DatasetEntry& entry : data.entries) {
    std::string text = detections_to_json(entry.detections, labels);
    SceneDetections reloaded = detections_from_json(text, labels, cfg.feature_dim, true);
    CHECK(same_detections(entry.detections, reloaded));
    // A second round trip is byte-stable.
    CHECK(detections_to_json(reloaded, labels) == text);
  }
}

TEST_CASE("synthetic generation is deterministic") {
  SynthConfig cfg;
  cfg.feature_dim = 8;
  Dataset a = synth_generate(42, 10, cfg);
  Dataset b = synth_generate(42, 10, cfg);
  LabelSpaces labels = synth_label_spaces();
  REQUIRE(a.entries.size() == b.entries.size());
  for (size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(detections_to_json(a.entries[i].detections, labels) ==
          detections_to_json(b.entries[i].detections, labels));
    CHECK(a.entries[i].captions == b.entries[i].captions);
  }
  Dataset c = synth_generate(43, 10, cfg);
  CHECK(detections_to_json(a.entries[0].detections, labels) !=
        detections_to_json(c.entries[0].detections, labels));
}

TEST_CASE("empty synthetic dataset") {
  CHECK(synth_generate(1, 0, SynthConfig{}).entries.empty());
}

TEST_CASE("every synthetic scene passes graph validation") {
  SynthConfig cfg;
  cfg.feature_dim = 8;
  Dataset data = synth_generate(5, 30, cfg);
  GraphConfig gcfg;
  for (const DatasetEntry& entry : data.entries) {
    CHECK(validate_graph(build_semantic_graph(entry.detections, gcfg)).ok());
    CHECK(validate_graph(build_geometry_graph(entry.detections, gcfg)).ok());
    CHECK(entry.captions.size() == 2);
    for (const auto& cap : entry.captions) CHECK(cap.size() == 7);
  }
}

TEST_CASE("synthetic captions are in-vocabulary under the default threshold") {
  SynthConfig cfg;
  cfg.feature_dim = 8;
  Dataset data = synth_generate(11, 300, cfg);
  std::vector<std::vector<std::string>> captions;
  for (const auto& entry : data.entries)
    for (const auto& cap : entry.captions) captions.push_back(cap);
  Vocabulary vocab = build_vocabulary(captions, 5, 16);
  for (const auto& cap : captions)
    for (const auto& tok : cap) CHECK(vocab.id_of(tok) != Vocabulary::kUnk);
}

TEST_CASE("captions file round trip") {
  SynthConfig cfg;
  cfg.feature_dim = 4;
  Dataset data = synth_generate(9, 5, cfg);
  fs::path dir = temp_dir("captions");
  save_captions(dir / "captions.json", data);
  auto loaded = load_captions(dir / "captions.json");
  REQUIRE(loaded.size() == 5);
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].first == data.entries[i].detections.image_id);
    REQUIRE(loaded[i].second.size() == 2);
    CHECK(tokenize(loaded[i].second[0]) == data.entries[i].captions[0]);
  }
}

TEST_CASE("tokenize lowercases and splits on whitespace") {
  CHECK(tokenize("A Red  Circle\tleft-of\na blue square") ==
        std::vector<std::string>{"a", "red", "circle", "left-of", "a", "blue", "square"});
}

TEST_CASE("label spaces: json round trip and scanning") {
  LabelSpaces labels = synth_label_spaces();
  CHECK(labels.attributes.id_to_label[0] == "<no-attr>");
  fs::path dir = temp_dir("labels");
  save_label_spaces(dir / "labels.json", labels);
  LabelSpaces loaded = load_label_spaces(dir / "labels.json");
  CHECK(loaded.objects.id_to_label == labels.objects.id_to_label);
  CHECK(loaded.attributes.id_to_label == labels.attributes.id_to_label);
  CHECK(loaded.relations.id_to_label == labels.relations.id_to_label);

  SynthConfig cfg;
  cfg.feature_dim = 4;
  Dataset data = synth_generate(13, 20, cfg);
  std::vector<fs::path> files;
  for (const auto& entry : data.entries) {
    fs::path p = dir / detection_file_name(entry.detections.image_id);
    std::ofstream(p) << detections_to_json(entry.detections, labels);
    files.push_back(p);
  }
  LabelSpaces scanned = scan_label_spaces(files);
  // Scanning recovers a subset of the world (only labels actually present),
  // in canonical order.
  CHECK(std::is_sorted(scanned.objects.id_to_label.begin(), scanned.objects.id_to_label.end()));
  for (const auto& label : scanned.objects.id_to_label)
    CHECK(labels.objects.contains(label));
  CHECK(scanned.attributes.id_to_label[0] == "<no-attr>");
}

}  // TEST_SUITE
