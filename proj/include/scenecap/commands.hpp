#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scenecap/corpus.hpp"
#include "scenecap/model.hpp"
#include "scenecap/train.hpp"

namespace scenecap {

/// Flat key-value run configuration (model + graph + training + corpus
/// settings). Parsed from "key = value" lines; '#' starts a comment;
/// unknown keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GraphConfig graph;
  int vocab_min_count = 5;
  int max_caption_len = 16;
  double val_fraction = 0.1;
};

RunConfig parse_run_config_text(const std::string& text, const std::string& source = "<config>");
RunConfig parse_run_config(const std::filesystem::path& path);
std::map<std::string, std::string> run_config_to_map(const RunConfig& cfg);

/// Writes a manifest (command, resolved config, seed, inputs, output hashes,
/// wall clock) atomically next to a command's outputs.
void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const std::map<std::string, std::string>& config, uint64_t seed,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs, double wall_seconds);

struct SynthCmdOptions {
  uint64_t seed = 0;
  int n = 100;
  std::filesystem::path out;
  SynthConfig synth;
};

struct TrainCmdOptions {
  std::filesystem::path data;
  std::filesystem::path config;
  std::filesystem::path out;
};

struct CaptionCmdOptions {
  std::filesystem::path ckpt;
  std::filesystem::path detections;  // file or directory of det_*.json
  std::filesystem::path out;
  std::filesystem::path vocab;   // default: vocab.txt next to the checkpoint
  std::filesystem::path labels;  // default: labels.json next to the checkpoint
  int beam = 3;
  int max_len = 16;
  bool dump_gates = false;
  GraphConfig graph;
};

struct EvalCmdOptions {
  std::filesystem::path pred;
  std::filesystem::path refs;
  std::filesystem::path out;  // optional; metrics always printed to stdout
};

struct GraphDumpCmdOptions {
  std::filesystem::path detections;
  std::filesystem::path out;
  std::string kind = "geometry";  // or "semantic"
  GraphConfig graph;
  std::vector<double> sweep_iou;  // optional IoU-threshold sweep (geometry)
};

int cmd_synth(const SynthCmdOptions& opts);
int cmd_train(const TrainCmdOptions& opts);
int cmd_caption(const CaptionCmdOptions& opts);
int cmd_eval(const EvalCmdOptions& opts);
int cmd_graph_dump(const GraphDumpCmdOptions& opts);

}  // namespace scenecap
