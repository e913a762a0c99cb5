#include "scenecap/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "scenecap/checkpoint.hpp"
#include "scenecap/decode.hpp"
#include "scenecap/metrics.hpp"

namespace scenecap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

uint64_t file_hash(const fs::path& path) {
  std::string content = read_file(path);
  return fnv1a64(content.data(), content.size());
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int env_thread_count() {
  const char* env = std::getenv("SCENECAP_THREADS");
  if (env == nullptr) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

/// Runs fn(i) for i in [0, n) across the configured thread count; results
/// are index-addressed so output order never depends on scheduling.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  int threads = std::min(env_thread_count(), std::max(1, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

std::vector<fs::path> detection_paths(const fs::path& where) {
  std::vector<fs::path> paths;
  if (fs::is_directory(where)) {
    fs::path dir = fs::is_directory(where / "detections") ? where / "detections" : where;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json" &&
          entry.path().filename().string().rfind("det_", 0) == 0)
        paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
  } else if (fs::exists(where)) {
    paths.push_back(where);
  } else {
    throw Error("no detections at " + where.string());
  }
  if (paths.empty()) throw Error("no detection files under " + where.string());
  return paths;
}

}  // namespace

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

RunConfig parse_run_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw Error(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error(source + ":" + std::to_string(line_no) + ": empty key or value");

    auto as_int = [&](const std::string& v) {
      size_t used = 0;
      int out = std::stoi(v, &used);
      if (used != v.size()) throw Error(source + ": '" + key + "': not an integer: " + v);
      return out;
    };
    auto as_double = [&](const std::string& v) {
      size_t used = 0;
      double out = std::stod(v, &used);
      if (used != v.size()) throw Error(source + ": '" + key + "': not a number: " + v);
      return out;
    };
    auto as_bool = [&](const std::string& v) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw Error(source + ": '" + key + "': not a boolean: " + v);
    };

    if (key == "appearance_dim") cfg.model.appearance_dim = as_int(value);
    else if (key == "unit_dim") cfg.model.unit_dim = as_int(value);
    else if (key == "attention_dim") cfg.model.attention_dim = as_int(value);
    else if (key == "lstm_dim") cfg.model.lstm_dim = as_int(value);
    else if (key == "word_dim") cfg.model.word_dim = as_int(value);
    else if (key == "label_dim") cfg.model.label_dim = as_int(value);
    else if (key == "n_attrs") {
      cfg.model.n_attrs = as_int(value);
      cfg.graph.n_attrs = cfg.model.n_attrs;
    } else if (key == "dropout") cfg.model.dropout = as_double(value);
    else if (key == "use_gate") cfg.model.use_gate = as_bool(value);
    else if (key == "units") cfg.model.units = UnitSet::parse(value);
    else if (key == "appearance_only_objects") cfg.model.appearance_only_objects = as_bool(value);
    else if (key == "iou_threshold") cfg.graph.iou_threshold = as_double(value);
    else if (key == "dist_threshold") cfg.graph.dist_threshold = as_double(value);
    else if (key == "max_semantic_relations") cfg.graph.max_semantic_relations = as_int(value);
    else if (key == "lr0") cfg.train.lr0 = as_double(value);
    else if (key == "decay") cfg.train.decay = as_double(value);
    else if (key == "decay_every") cfg.train.decay_every = as_int(value);
    else if (key == "batch_size") cfg.train.batch_size = as_int(value);
    else if (key == "epochs") cfg.train.epochs = as_int(value);
    else if (key == "grad_clip") cfg.train.grad_clip = as_double(value);
    else if (key == "seed") cfg.train.seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "val_every") cfg.train.val_every = as_int(value);
    else if (key == "val_fraction") cfg.val_fraction = as_double(value);
    else if (key == "vocab_min_count") cfg.vocab_min_count = as_int(value);
    else if (key == "max_caption_len") cfg.max_caption_len = as_int(value);
    else throw Error(source + ": unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig parse_run_config(const fs::path& path) {
  return parse_run_config_text(read_file(path), path.string());
}

std::map<std::string, std::string> run_config_to_map(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  m["appearance_dim"] = std::to_string(cfg.model.appearance_dim);
  m["unit_dim"] = std::to_string(cfg.model.unit_dim);
  m["attention_dim"] = std::to_string(cfg.model.attention_dim);
  m["lstm_dim"] = std::to_string(cfg.model.lstm_dim);
  m["word_dim"] = std::to_string(cfg.model.word_dim);
  m["label_dim"] = std::to_string(cfg.model.label_dim);
  m["n_attrs"] = std::to_string(cfg.model.n_attrs);
  m["dropout"] = fmt(cfg.model.dropout);
  m["use_gate"] = cfg.model.use_gate ? "true" : "false";
  m["units"] = cfg.model.units.to_string();
  m["appearance_only_objects"] = cfg.model.appearance_only_objects ? "true" : "false";
  m["iou_threshold"] = fmt(cfg.graph.iou_threshold);
  m["dist_threshold"] = fmt(cfg.graph.dist_threshold);
  m["max_semantic_relations"] = std::to_string(cfg.graph.max_semantic_relations);
  m["lr0"] = fmt(cfg.train.lr0);
  m["decay"] = fmt(cfg.train.decay);
  m["decay_every"] = std::to_string(cfg.train.decay_every);
  m["batch_size"] = std::to_string(cfg.train.batch_size);
  m["epochs"] = std::to_string(cfg.train.epochs);
  m["grad_clip"] = fmt(cfg.train.grad_clip);
  m["seed"] = std::to_string(cfg.train.seed);
  m["val_every"] = std::to_string(cfg.train.val_every);
  m["val_fraction"] = fmt(cfg.val_fraction);
  m["vocab_min_count"] = std::to_string(cfg.vocab_min_count);
  m["max_caption_len"] = std::to_string(cfg.max_caption_len);
  return m;
}

void write_manifest(const fs::path& path, const std::string& command,
                    const std::map<std::string, std::string>& config, uint64_t seed,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    double wall_seconds) {
  json doc;
  doc["command"] = command;
  doc["config"] = config;
  doc["seed"] = seed;
  doc["inputs"] = json::array();
  for (const auto& p : inputs) doc["inputs"].push_back(p.string());
  doc["outputs"] = json::array();
  for (const auto& p : outputs)
    doc["outputs"].push_back({{"path", p.string()}, {"fnv64", hex64(file_hash(p))}});
  doc["wall_clock_sec"] = wall_seconds;
  write_file_atomic(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const SynthCmdOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  if (opts.out.empty()) throw Error("synth: --out is required");
  fs::create_directories(opts.out / "detections");

  Dataset data = synth_generate(opts.seed, opts.n, opts.synth);
  LabelSpaces labels = synth_label_spaces();

  std::vector<fs::path> outputs;
  for (const DatasetEntry& entry : data.entries) {
    fs::path det = opts.out / "detections" / detection_file_name(entry.detections.image_id);
    write_file_atomic(det, detections_to_json(entry.detections, labels));
    outputs.push_back(det);
  }
  save_captions(opts.out / "captions.json", data);
  outputs.push_back(opts.out / "captions.json");
  save_label_spaces(opts.out / "labels.json", labels);
  outputs.push_back(opts.out / "labels.json");

  std::map<std::string, std::string> config;
  config["n"] = std::to_string(opts.n);
  config["feature_dim"] = std::to_string(opts.synth.feature_dim);
  config["min_objects"] = std::to_string(opts.synth.min_objects);
  config["max_objects"] = std::to_string(opts.synth.max_objects);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(opts.out / "manifest.json", "synth", config, opts.seed, {}, outputs, wall);
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const TrainCmdOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  if (!fs::exists(opts.data)) throw Error("train: data path does not exist: " + opts.data.string());
  RunConfig cfg = parse_run_config(opts.config);
  fs::create_directories(opts.out);

  LabelSpaces labels;
  if (fs::exists(opts.data / "labels.json")) {
    labels = load_label_spaces(opts.data / "labels.json");
  } else {
    labels = scan_label_spaces(detection_paths(opts.data));
  }
  Dataset data = load_dataset(opts.data, labels, cfg.model.appearance_dim, true);
  if (data.entries.empty()) throw Error("train: dataset is empty");

  size_t n_val = static_cast<size_t>(cfg.val_fraction * static_cast<double>(data.entries.size()));
  Dataset train_data, val_data;
  train_data.split = "train";
  val_data.split = "val";
  for (size_t i = 0; i < data.entries.size(); ++i) {
    if (i + n_val >= data.entries.size())
      val_data.entries.push_back(data.entries[i]);
    else
      train_data.entries.push_back(data.entries[i]);
  }

  std::vector<std::vector<std::string>> caption_tokens;
  for (const DatasetEntry& entry : train_data.entries)
    for (const auto& tokens : entry.captions) caption_tokens.push_back(tokens);
  Vocabulary vocab = build_vocabulary(caption_tokens, cfg.vocab_min_count, cfg.max_caption_len);

  ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  mcfg.n_object_labels = labels.objects.size();
  mcfg.n_attribute_labels = labels.attributes.size();
  mcfg.n_relation_labels = labels.relations.size();
  mcfg.validate();

  std::vector<PreparedImage> train_images = prepare_images(train_data, vocab, cfg.graph, mcfg);
  std::vector<PreparedImage> val_images = prepare_images(val_data, vocab, cfg.graph, mcfg);

  ModelParams params = ModelParams::init(mcfg, cfg.train.seed);

  std::ofstream log_out(opts.out / "train_log.ndjson", std::ios::binary | std::ios::trunc);
  if (!log_out) throw Error("cannot write " + (opts.out / "train_log.ndjson").string());
  auto on_epoch = [&log_out](const EpochLog& log) {
    json rec;
    rec["epoch"] = log.epoch;
    rec["step"] = log.step;
    rec["lr"] = log.lr;
    rec["train_loss"] = log.train_loss;
    rec["train_loss_sum"] = log.train_loss_sum;
    rec["val_loss"] = log.val_loss.has_value() ? json(*log.val_loss) : json(nullptr);
    rec["val_cider"] = log.val_cider.has_value() ? json(*log.val_cider) : json(nullptr);
    log_out << rec.dump() << "\n";
    log_out.flush();
  };
  TrainResult result = train(params, mcfg, train_images, val_images, vocab, cfg.train, on_epoch);
  log_out.close();

  CheckpointMeta meta;
  meta.config = mcfg;
  meta.vocab_hash = vocab.content_hash();
  meta.seed = cfg.train.seed;
  save_checkpoint(opts.out / "model.ckpt", result.best_params, meta);
  save_vocabulary(opts.out / "vocab.txt", vocab);
  save_label_spaces(opts.out / "labels.json", labels);

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(opts.out / "manifest.json", "train", run_config_to_map(cfg), cfg.train.seed,
                 {opts.data, opts.config},
                 {opts.out / "model.ckpt", opts.out / "vocab.txt", opts.out / "labels.json",
                  opts.out / "train_log.ndjson"},
                 wall);
  return 0;
}

// ---------------------------------------------------------------------------
// caption
// ---------------------------------------------------------------------------

int cmd_caption(const CaptionCmdOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  Checkpoint ckpt = load_checkpoint(opts.ckpt);
  fs::path vocab_path = opts.vocab.empty() ? opts.ckpt.parent_path() / "vocab.txt" : opts.vocab;
  fs::path labels_path =
      opts.labels.empty() ? opts.ckpt.parent_path() / "labels.json" : opts.labels;
  Vocabulary vocab = load_vocabulary(vocab_path, opts.max_len);
  if (vocab.content_hash() != ckpt.meta.vocab_hash)
    throw Error("caption: vocabulary " + vocab_path.string() +
                " does not match the checkpoint (content hash mismatch)");
  if (vocab.size() != ckpt.meta.config.vocab_size)
    throw Error("caption: vocabulary size mismatch with checkpoint config");
  LabelSpaces labels = load_label_spaces(labels_path);
  if (labels.objects.size() != ckpt.meta.config.n_object_labels ||
      labels.attributes.size() != ckpt.meta.config.n_attribute_labels ||
      labels.relations.size() != ckpt.meta.config.n_relation_labels)
    throw Error("caption: label spaces do not match the checkpoint config");

  GraphConfig gcfg = opts.graph;
  gcfg.n_attrs = ckpt.meta.config.n_attrs;

  std::vector<fs::path> det_files = detection_paths(opts.detections);
  struct Item {
    int image_id;
    std::string caption;
    double log_prob;
    std::vector<StepDiagnostics> steps;
    std::vector<std::string> words;
  };
  std::vector<Item> items(det_files.size());

  parallel_for(static_cast<int>(det_files.size()), [&](int i) {
    SceneDetections dets = load_detections(det_files[static_cast<size_t>(i)], labels,
                                           ckpt.meta.config.appearance_dim, true);
    SceneGraph sem = build_semantic_graph(dets, gcfg);
    SceneGraph geo = build_geometry_graph(dets, gcfg);
    SceneInputs scene = make_scene_inputs(sem, geo, ckpt.meta.config);
    Hypothesis best;
    if (opts.beam == 1) {
      best = greedy_decode(ckpt.params, ckpt.meta.config, scene, opts.max_len);
    } else {
      DecodeOptions dopts;
      dopts.beam = opts.beam;
      dopts.max_len = opts.max_len;
      best = beam_search(ckpt.params, ckpt.meta.config, scene, dopts).front();
    }
    Item& item = items[static_cast<size_t>(i)];
    item.image_id = dets.image_id;
    item.words = decode_caption(vocab, best.tokens);
    std::string text;
    for (size_t w = 0; w < item.words.size(); ++w) {
      if (w) text += " ";
      text += item.words[w];
    }
    item.caption = text;
    item.log_prob = best.log_prob;
    item.steps = best.steps;
  });

  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.image_id < b.image_id; });

  json doc = json::array();
  for (const Item& item : items) {
    json rec;
    rec["image_id"] = item.image_id;
    rec["caption"] = item.caption;
    rec["log_prob"] = item.log_prob;
    if (opts.dump_gates) {
      json gates = json::array();
      // One record per emitted token (including the closing EOS step).
      for (size_t s = 0; s < item.steps.size(); ++s) {
        json g;
        g["word"] = s < item.words.size() ? item.words[s] : "<eos>";
        int gi = 0;
        for (int c = 0; c < kNumUnitCategories; ++c) {
          if (!ckpt.meta.config.units.active[static_cast<size_t>(c)]) continue;
          g[kUnitCategoryNames[static_cast<size_t>(c)]] =
              item.steps[s].gates[static_cast<size_t>(gi++)];
        }
        gates.push_back(std::move(g));
      }
      rec["gates"] = std::move(gates);
    }
    doc.push_back(std::move(rec));
  }
  if (opts.out.empty()) throw Error("caption: --out is required");
  write_file_atomic(opts.out, doc.dump(2) + "\n");

  std::map<std::string, std::string> config;
  config["beam"] = std::to_string(opts.beam);
  config["max_len"] = std::to_string(opts.max_len);
  config["dump_gates"] = opts.dump_gates ? "true" : "false";
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(opts.out.string() + ".manifest.json", "caption", config, ckpt.meta.seed,
                 {opts.ckpt, opts.detections}, {opts.out}, wall);
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const EvalCmdOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  json pred_doc = json::parse(read_file(opts.pred), nullptr, false);
  if (pred_doc.is_discarded()) throw Error(opts.pred.string() + ": malformed JSON");
  std::map<int, std::vector<std::string>> predictions;
  try {
    for (const auto& item : pred_doc)
      predictions[item.at("image_id").get<int>()] =
          tokenize(item.at("caption").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(opts.pred.string() + ": schema violation: " + e.what());
  }

  auto refs = load_captions(opts.refs);
  std::vector<EvalPair> pairs;
  for (const auto& [image_id, captions] : refs) {
    auto it = predictions.find(image_id);
    if (it == predictions.end())
      throw Error("eval: no prediction for image " + std::to_string(image_id));
    EvalPair pair;
    pair.candidate = it->second;
    for (const std::string& text : captions) pair.references.push_back(tokenize(text));
    pairs.push_back(std::move(pair));
  }
  for (const auto& [image_id, tokens] : predictions) {
    if (std::none_of(refs.begin(), refs.end(),
                     [id = image_id](const auto& r) { return r.first == id; }))
      throw Error("eval: prediction for unknown image " + std::to_string(image_id));
  }

  json metrics;
  metrics["n_images"] = pairs.size();
  for (int n = 1; n <= 4; ++n) metrics["bleu_" + std::to_string(n)] = bleu(pairs, n);
  metrics["cider_d"] = cider_d(pairs);
  std::string text = metrics.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!opts.out.empty()) {
    write_file_atomic(opts.out, text);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(opts.out.string() + ".manifest.json", "eval", {}, 0,
                   {opts.pred, opts.refs}, {opts.out}, wall);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// graph-dump
// ---------------------------------------------------------------------------

namespace {

json graph_to_json(const SceneGraph& g, const LabelSpaces& labels) {
  json doc;
  doc["image_id"] = g.image_id;
  doc["kind"] = g.kind == GraphKind::semantic ? "semantic" : "geometry";
  doc["objects"] = json::array();
  for (const DetectedObject& obj : g.object_units)
    doc["objects"].push_back(
        {{"id", obj.id},
         {"label", labels.objects.id_to_label[static_cast<size_t>(obj.label_id)]}});
  doc["attribute_units"] = json::array();
  for (const AttributeUnit& au : g.attribute_units) {
    json labels_json = json::array();
    for (int id : au.labels)
      labels_json.push_back(labels.attributes.id_to_label[static_cast<size_t>(id)]);
    doc["attribute_units"].push_back(
        {{"object_index", au.object_index}, {"labels", labels_json}});
  }
  doc["relation_units"] = json::array();
  for (const RelationUnit& rel : g.relation_units) {
    json r = {{"subject", rel.subject}, {"object", rel.object}};
    if (g.kind == GraphKind::semantic) {
      r["predicate"] = labels.relations.id_to_label[static_cast<size_t>(rel.predicate_id)];
      r["score"] = rel.score;
    } else {
      r["cue"] = rel.cue.v;
    }
    doc["relation_units"].push_back(std::move(r));
  }
  doc["edges"] = json::array();
  auto type_name = [](NodeType t) {
    return t == NodeType::object ? "object" : t == NodeType::attribute ? "attribute" : "relation";
  };
  for (const GraphEdge& e : g.edges)
    doc["edges"].push_back({{"from", {{"type", type_name(e.from.type)}, {"index", e.from.index}}},
                            {"to", {{"type", type_name(e.to.type)}, {"index", e.to.index}}}});
  doc["stats"] = {{"n_objects", g.object_units.size()},
                  {"n_attribute_units", g.attribute_units.size()},
                  {"n_relation_units", g.relation_units.size()},
                  {"n_edges", g.edges.size()}};
  return doc;
}

}  // namespace

int cmd_graph_dump(const GraphDumpCmdOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  if (opts.kind != "semantic" && opts.kind != "geometry")
    throw Error("graph-dump: kind must be 'semantic' or 'geometry'");
  std::vector<fs::path> det_files = detection_paths(opts.detections);

  fs::path data_dir = fs::is_directory(opts.detections) ? opts.detections
                                                        : opts.detections.parent_path();
  LabelSpaces labels;
  if (fs::exists(data_dir / "labels.json")) {
    labels = load_label_spaces(data_dir / "labels.json");
  } else if (fs::exists(data_dir.parent_path() / "labels.json")) {
    labels = load_label_spaces(data_dir.parent_path() / "labels.json");
  } else {
    labels = scan_label_spaces(det_files);
  }

  json doc;
  doc["kind"] = opts.kind;
  doc["graphs"] = json::array();
  double relation_total = 0.0;
  for (const fs::path& path : det_files) {
    SceneDetections dets = load_detections(path, labels, -1, true);
    SceneGraph g = opts.kind == "semantic" ? build_semantic_graph(dets, opts.graph)
                                           : build_geometry_graph(dets, opts.graph);
    relation_total += static_cast<double>(g.relation_units.size());
    doc["graphs"].push_back(graph_to_json(g, labels));
  }
  doc["stats"] = {
      {"n_images", det_files.size()},
      {"mean_relation_units", relation_total / static_cast<double>(det_files.size())}};

  if (opts.kind == "geometry" && !opts.sweep_iou.empty()) {
    json sweep = json::array();
    for (double threshold : opts.sweep_iou) {
      GraphConfig gcfg = opts.graph;
      gcfg.iou_threshold = threshold;
      double total = 0.0;
      for (const fs::path& path : det_files) {
        SceneDetections dets = load_detections(path, labels, -1, true);
        total += static_cast<double>(build_geometry_graph(dets, gcfg).relation_units.size());
      }
      sweep.push_back({{"iou_threshold", threshold},
                       {"mean_relation_units", total / static_cast<double>(det_files.size())}});
    }
    doc["sweep"] = std::move(sweep);
  }

  if (opts.out.empty()) throw Error("graph-dump: --out is required");
  write_file_atomic(opts.out, doc.dump(2) + "\n");
  std::map<std::string, std::string> config;
  config["kind"] = opts.kind;
  config["iou_threshold"] = std::to_string(opts.graph.iou_threshold);
  config["dist_threshold"] = std::to_string(opts.graph.dist_threshold);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(opts.out.string() + ".manifest.json", "graph-dump", config, 0,
                 {opts.detections}, {opts.out}, wall);
  return 0;
}

}  // namespace scenecap
