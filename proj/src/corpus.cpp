#include "scenecap/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace scenecap {

using nlohmann::json;

namespace {

const std::vector<std::string> kReservedTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
const char* kNoAttrName = "<no-attr>";

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json parse_json(const std::string& text, const std::string& source) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(source + ": malformed JSON");
  return doc;
}

}  // namespace

uint64_t Vocabulary::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  const char separator = '\n';
  for (const std::string& tok : id_to_token) {
    h = fnv1a64(tok.data(), tok.size(), h);
    h = fnv1a64(&separator, 1, h);
  }
  return h;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& captions,
                            int min_count, int max_len) {
  if (captions.empty()) throw Error("build_vocabulary: empty corpus");
  std::map<std::string, int64_t> freq;
  for (const auto& caption : captions)
    for (const std::string& tok : caption)
      if (!tok.empty()) freq[tok]++;

  std::vector<std::pair<std::string, int64_t>> kept;
  for (const auto& [tok, count] : freq)
    if (count >= min_count) kept.emplace_back(tok, count);
  // Canonical id assignment: frequency descending, then lexicographic.
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.max_len = max_len;
  vocab.id_to_token = kReservedTokens;
  for (const auto& [tok, count] : kept) vocab.id_to_token.push_back(tok);
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int>(i);
  return vocab;
}

std::vector<int> encode_caption(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.push_back(Vocabulary::kBos);
  for (size_t i = 0; i < tokens.size() && i < static_cast<size_t>(vocab.max_len); ++i)
    ids.push_back(vocab.id_of(tokens[i]));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<std::string> decode_caption(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id <= Vocabulary::kEos) continue;  // PAD / BOS / EOS
    if (id < 0 || id >= vocab.size())
      throw Error("decode_caption: id " + std::to_string(id) + " out of range");
    tokens.push_back(vocab.id_to_token[static_cast<size_t>(id)]);
  }
  return tokens;
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (size_t i = kReservedTokens.size(); i < vocab.id_to_token.size(); ++i)
    out << vocab.id_to_token[i] << "\n";
}

Vocabulary load_vocabulary(const std::filesystem::path& path, int max_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Vocabulary vocab;
  vocab.max_len = max_len;
  vocab.id_to_token = kReservedTokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) vocab.id_to_token.push_back(line);
  }
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int>(i);
  return vocab;
}

int LabelSpace::id_of(const std::string& label) const {
  auto it = label_to_id.find(label);
  if (it == label_to_id.end()) throw Error("unknown label '" + label + "'");
  return it->second;
}

namespace {

LabelSpace make_label_space(std::vector<std::string> labels) {
  LabelSpace space;
  space.id_to_label = std::move(labels);
  for (size_t i = 0; i < space.id_to_label.size(); ++i)
    space.label_to_id[space.id_to_label[i]] = static_cast<int>(i);
  return space;
}

}  // namespace

LabelSpaces LabelSpaces::from_lists(std::vector<std::string> objects,
                                    std::vector<std::string> attributes,
                                    std::vector<std::string> relations) {
  LabelSpaces spaces;
  spaces.objects = make_label_space(std::move(objects));
  std::vector<std::string> attrs = {kNoAttrName};
  for (auto& a : attributes)
    if (a != kNoAttrName) attrs.push_back(std::move(a));
  spaces.attributes = make_label_space(std::move(attrs));
  spaces.relations = make_label_space(std::move(relations));
  return spaces;
}

LabelSpaces scan_label_spaces(const std::vector<std::filesystem::path>& detection_files) {
  std::vector<std::string> objects, attributes, relations;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& path : detection_files) {
    json doc = parse_json(read_file(path), path.string());
    for (const auto& obj : doc.value("objects", json::array())) {
      add_unique(objects, obj.at("label").get<std::string>());
      for (const auto& attr : obj.value("attributes", json::array()))
        add_unique(attributes, attr.at("label").get<std::string>());
    }
    for (const auto& rel : doc.value("relationships", json::array()))
      add_unique(relations, rel.at("predicate").get<std::string>());
  }
  std::sort(objects.begin(), objects.end());
  std::sort(attributes.begin(), attributes.end());
  std::sort(relations.begin(), relations.end());
  return LabelSpaces::from_lists(std::move(objects), std::move(attributes), std::move(relations));
}

void save_label_spaces(const std::filesystem::path& path, const LabelSpaces& labels) {
  json doc;
  doc["objects"] = labels.objects.id_to_label;
  doc["attributes"] = labels.attributes.id_to_label;
  doc["relations"] = labels.relations.id_to_label;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

LabelSpaces load_label_spaces(const std::filesystem::path& path) {
  json doc = parse_json(read_file(path), path.string());
  std::vector<std::string> attrs = doc.at("attributes").get<std::vector<std::string>>();
  if (attrs.empty() || attrs[0] != kNoAttrName)
    throw Error(path.string() + ": attribute space must reserve '" + kNoAttrName + "' at id 0");
  attrs.erase(attrs.begin());
  return LabelSpaces::from_lists(doc.at("objects").get<std::vector<std::string>>(),
                                 std::move(attrs),
                                 doc.at("relations").get<std::vector<std::string>>());
}

SceneDetections detections_from_json(const std::string& text, const LabelSpaces& labels,
                                     int expected_feature_dim, bool strict,
                                     const std::string& source_name) {
  json doc = parse_json(text, source_name);
  SceneDetections dets;
  try {
    const json& image = doc.at("image");
    dets.image_id = image.at("id").get<int>();
    dets.image.w = image.at("width").get<double>();
    dets.image.h = image.at("height").get<double>();
    if (dets.image.w <= 0 || dets.image.h <= 0)
      throw Error("image " + std::to_string(dets.image_id) + ": non-positive image size");

    for (const auto& jo : doc.value("objects", json::array())) {
      DetectedObject obj;
      obj.id = jo.at("id").get<int>();
      auto box = jo.at("box").get<std::vector<double>>();
      if (box.size() != 4)
        throw Error("image " + std::to_string(dets.image_id) + " object " +
                    std::to_string(obj.id) + ": box must have 4 entries");
      obj.box = {box[0], box[1], box[2], box[3]};
      if (!obj.box.valid())
        throw Error("image " + std::to_string(dets.image_id) + " object " +
                    std::to_string(obj.id) + ": degenerate box");
      std::string label = jo.at("label").get<std::string>();
      if (!labels.objects.contains(label))
        throw Error("image " + std::to_string(dets.image_id) + ": unknown object label '" +
                    label + "'");
      obj.label_id = labels.objects.id_of(label);
      obj.score = jo.at("score").get<double>();
      obj.appearance = jo.at("feature").get<std::vector<double>>();
      if (expected_feature_dim >= 0 &&
          static_cast<int>(obj.appearance.size()) != expected_feature_dim)
        throw Error("image " + std::to_string(dets.image_id) + " object " +
                    std::to_string(obj.id) + ": feature length " +
                    std::to_string(obj.appearance.size()) + ", expected " +
                    std::to_string(expected_feature_dim));
      for (const auto& ja : jo.value("attributes", json::array())) {
        std::string attr_label = ja.at("label").get<std::string>();
        int attr_id;
        if (labels.attributes.contains(attr_label)) {
          attr_id = labels.attributes.id_of(attr_label);
        } else if (strict) {
          throw Error("image " + std::to_string(dets.image_id) + ": unknown attribute label '" +
                      attr_label + "'");
        } else {
          attr_id = kNoAttrLabel;
        }
        obj.attributes.push_back({attr_id, ja.at("score").get<double>()});
      }
      std::stable_sort(obj.attributes.begin(), obj.attributes.end(),
                       [](const AttributePrediction& a, const AttributePrediction& b) {
                         return a.score > b.score;
                       });
      dets.objects.push_back(std::move(obj));
    }

    for (const auto& jr : doc.value("relationships", json::array())) {
      DetectedRelation rel;
      rel.subject_id = jr.at("subject").get<int>();
      rel.object_id = jr.at("object").get<int>();
      std::string pred = jr.at("predicate").get<std::string>();
      if (!labels.relations.contains(pred)) {
        if (strict)
          throw Error("image " + std::to_string(dets.image_id) + ": unknown predicate '" +
                      pred + "'");
        continue;  // lenient mode drops relations with unknown predicates
      }
      rel.predicate_id = labels.relations.id_of(pred);
      rel.score = jr.at("score").get<double>();
      auto known = [&](int id) {
        return std::any_of(dets.objects.begin(), dets.objects.end(),
                           [id](const DetectedObject& o) { return o.id == id; });
      };
      if (!known(rel.subject_id) || !known(rel.object_id))
        throw Error("image " + std::to_string(dets.image_id) + ": relationship (" +
                    std::to_string(rel.subject_id) + ", " + pred + ", " +
                    std::to_string(rel.object_id) + ") references a missing object id");
      dets.relations.push_back(rel);
    }
  } catch (const json::exception& e) {
    throw Error(source_name + ": schema violation: " + e.what());
  }
  return dets;
}

SceneDetections load_detections(const std::filesystem::path& path, const LabelSpaces& labels,
                                int expected_feature_dim, bool strict) {
  return detections_from_json(read_file(path), labels, expected_feature_dim, strict,
                              path.string());
}

std::string detections_to_json(const SceneDetections& dets, const LabelSpaces& labels) {
  json doc;
  doc["image"] = {{"id", dets.image_id},
                  {"width", dets.image.w},
                  {"height", dets.image.h}};
  doc["objects"] = json::array();
  for (const DetectedObject& obj : dets.objects) {
    json jo;
    jo["id"] = obj.id;
    jo["box"] = {obj.box.cx, obj.box.cy, obj.box.w, obj.box.h};
    jo["label"] = labels.objects.id_to_label[static_cast<size_t>(obj.label_id)];
    jo["score"] = obj.score;
    jo["feature"] = obj.appearance;
    jo["attributes"] = json::array();
    for (const AttributePrediction& attr : obj.attributes)
      jo["attributes"].push_back(
          {{"label", labels.attributes.id_to_label[static_cast<size_t>(attr.label_id)]},
           {"score", attr.score}});
    doc["objects"].push_back(std::move(jo));
  }
  doc["relationships"] = json::array();
  for (const DetectedRelation& rel : dets.relations)
    doc["relationships"].push_back(
        {{"subject", rel.subject_id},
         {"object", rel.object_id},
         {"predicate", labels.relations.id_to_label[static_cast<size_t>(rel.predicate_id)]},
         {"score", rel.score}});
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Synthetic world
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kShapes = {"circle", "cross",  "diamond", "hexagon",
                                          "ring",   "square", "star",    "triangle"};
const std::vector<std::string> kColors = {"blue", "green", "orange", "purple", "red", "yellow"};
const std::vector<std::string> kPredicates = {"above", "left-of", "overlapping"};

int predicate_id_of(const LabelSpaces& labels, const char* name) {
  return labels.relations.id_of(name);
}

/// Appearance anchor for a shape label: a fixed pseudo-random direction that
/// depends only on the label, so features carry shape (but not color) signal.
std::vector<double> shape_anchor(int label_id, int dim) {
  Rng rng(fnv1a64("shape-anchor", 0xcbf29ce484222325ull ^ static_cast<uint64_t>(label_id)));
  std::vector<double> v(static_cast<size_t>(dim));
  for (double& x : v) x = rng.normal();
  return v;
}

struct LayoutRelation {
  int subject;  // object index
  int object;
  int predicate_id;
  double sort_key[4];
};

}  // namespace

LabelSpaces synth_label_spaces() {
  return LabelSpaces::from_lists(kShapes, kColors, kPredicates);
}

Dataset synth_generate(uint64_t seed, int n_images, const SynthConfig& cfg) {
  if (n_images < 0) throw Error("synth_generate: n_images must be >= 0");
  LabelSpaces labels = synth_label_spaces();
  int pred_above = predicate_id_of(labels, "above");
  int pred_left = predicate_id_of(labels, "left-of");
  int pred_overlap = predicate_id_of(labels, "overlapping");

  Dataset data;
  data.split = "train";
  for (int img = 0; img < n_images; ++img) {
    Rng rng(fnv1a64(&img, sizeof(img), seed ^ 0x9e3779b97f4a7c15ull));
    DatasetEntry entry;
    SceneDetections& dets = entry.detections;
    dets.image_id = img;
    dets.image = {cfg.canvas_w, cfg.canvas_h};

    int n_obj = static_cast<int>(rng.uniform_int(cfg.min_objects, cfg.max_objects));
    for (int i = 0; i < n_obj; ++i) {
      DetectedObject obj;
      obj.id = i;
      obj.box.w = rng.uniform(cfg.min_box, cfg.max_box);
      obj.box.h = rng.uniform(cfg.min_box, cfg.max_box);
      obj.box.cx = rng.uniform(obj.box.w / 2, cfg.canvas_w - obj.box.w / 2);
      obj.box.cy = rng.uniform(obj.box.h / 2, cfg.canvas_h - obj.box.h / 2);
      obj.label_id = static_cast<int>(rng.uniform_int(0, labels.objects.size() - 1));
      obj.score = rng.uniform(0.9, 1.0);
      int color = 1 + static_cast<int>(rng.uniform_int(0, labels.attributes.size() - 2));
      obj.attributes.push_back({color, rng.uniform(0.7, 1.0)});
      std::vector<double> anchor = shape_anchor(obj.label_id, cfg.feature_dim);
      obj.appearance.resize(static_cast<size_t>(cfg.feature_dim));
      for (int k = 0; k < cfg.feature_dim; ++k)
        obj.appearance[static_cast<size_t>(k)] =
            anchor[static_cast<size_t>(k)] + cfg.feature_noise * rng.normal();
      dets.objects.push_back(std::move(obj));
    }

    // Layout-derived relations over every object pair.
    std::vector<LayoutRelation> layout;
    for (int i = 0; i < n_obj; ++i) {
      for (int j = i + 1; j < n_obj; ++j) {
        const Box& a = dets.objects[static_cast<size_t>(i)].box;
        const Box& b = dets.objects[static_cast<size_t>(j)].box;
        LayoutRelation rel;
        if (iou(a, b) > 0.1) {
          rel.predicate_id = pred_overlap;
          bool a_subject = a.area() >= b.area();
          rel.subject = a_subject ? i : j;
          rel.object = a_subject ? j : i;
        } else if (std::abs(b.cx - a.cx) >= std::abs(b.cy - a.cy)) {
          rel.predicate_id = pred_left;
          bool a_subject = a.cx <= b.cx;
          rel.subject = a_subject ? i : j;
          rel.object = a_subject ? j : i;
        } else {
          rel.predicate_id = pred_above;
          bool a_subject = a.cy <= b.cy;
          rel.subject = a_subject ? i : j;
          rel.object = a_subject ? j : i;
        }
        const Box& sb = dets.objects[static_cast<size_t>(rel.subject)].box;
        const Box& ob = dets.objects[static_cast<size_t>(rel.object)].box;
        rel.sort_key[0] = sb.cx;
        rel.sort_key[1] = sb.cy;
        rel.sort_key[2] = ob.cx;
        rel.sort_key[3] = ob.cy;
        layout.push_back(rel);
        dets.relations.push_back(
            {rel.subject, rel.object, rel.predicate_id, rng.uniform(0.5, 1.0)});
      }
    }

    // Captions describe relations in content order (leftmost subject first),
    // so the target text is a pure function of the scene.
    std::sort(layout.begin(), layout.end(), [](const LayoutRelation& a, const LayoutRelation& b) {
      for (int k = 0; k < 4; ++k)
        if (a.sort_key[k] != b.sort_key[k]) return a.sort_key[k] < b.sort_key[k];
      return false;
    });
    auto color_name = [&](int obj_idx) {
      int attr = dets.objects[static_cast<size_t>(obj_idx)].attributes[0].label_id;
      return labels.attributes.id_to_label[static_cast<size_t>(attr)];
    };
    auto shape_name = [&](int obj_idx) {
      int lab = dets.objects[static_cast<size_t>(obj_idx)].label_id;
      return labels.objects.id_to_label[static_cast<size_t>(lab)];
    };
    auto describe = [&](const LayoutRelation& rel) {
      return std::vector<std::string>{
          "a",
          color_name(rel.subject),
          shape_name(rel.subject),
          labels.relations.id_to_label[static_cast<size_t>(rel.predicate_id)],
          "a",
          color_name(rel.object),
          shape_name(rel.object)};
    };
    for (int c = 0; c < std::max(1, cfg.captions_per_image); ++c) {
      if (layout.empty()) {
        // Single-object scene: no pair to describe.
        entry.captions.push_back({"a", color_name(0), shape_name(0)});
      } else {
        entry.captions.push_back(
            describe(layout[static_cast<size_t>(c) % layout.size()]));
      }
    }

    data.entries.push_back(std::move(entry));
  }
  return data;
}

void save_captions(const std::filesystem::path& path, const Dataset& data) {
  json doc = json::array();
  for (const DatasetEntry& entry : data.entries) {
    json captions = json::array();
    for (const auto& tokens : entry.captions) {
      std::string text;
      for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) text += " ";
        text += tokens[i];
      }
      captions.push_back(text);
    }
    doc.push_back({{"image_id", entry.detections.image_id}, {"captions", captions}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::vector<std::pair<int, std::vector<std::string>>> load_captions(
    const std::filesystem::path& path) {
  json doc = parse_json(read_file(path), path.string());
  std::vector<std::pair<int, std::vector<std::string>>> result;
  try {
    for (const auto& item : doc) {
      std::vector<std::string> captions;
      for (const auto& cap : item.at("captions")) captions.push_back(cap.get<std::string>());
      result.emplace_back(item.at("image_id").get<int>(), std::move(captions));
    }
  } catch (const json::exception& e) {
    throw Error(path.string() + ": schema violation: " + e.what());
  }
  return result;
}

std::string detection_file_name(int image_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "det_%06d.json", image_id);
  return buf;
}

Dataset load_dataset(const std::filesystem::path& dir, const LabelSpaces& labels,
                     int expected_feature_dim, bool strict) {
  auto captions = load_captions(dir / "captions.json");
  Dataset data;
  for (auto& [image_id, texts] : captions) {
    DatasetEntry entry;
    entry.detections = load_detections(dir / "detections" / detection_file_name(image_id),
                                       labels, expected_feature_dim, strict);
    if (texts.empty())
      throw Error("image " + std::to_string(image_id) + ": no captions");
    for (const std::string& text : texts) entry.captions.push_back(tokenize(text));
    data.entries.push_back(std::move(entry));
  }
  return data;
}

}  // namespace scenecap
