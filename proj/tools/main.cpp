#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "scenecap/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"scenecap: scene-graph captioning pipelines"};
  app.require_subcommand(1);

  scenecap::SynthCmdOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene-caption dataset");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--n", synth.n, "number of images")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--feature-dim", synth.synth.feature_dim, "appearance feature width");
  synth_cmd->add_option("--min-objects", synth.synth.min_objects, "minimum objects per image");
  synth_cmd->add_option("--max-objects", synth.synth.max_objects, "maximum objects per image");

  scenecap::TrainCmdOptions train;
  auto* train_cmd = app.add_subcommand("train", "train a captioning model");
  train_cmd->add_option("--data", train.data, "dataset directory")->required();
  train_cmd->add_option("--config", train.config, "run configuration file")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();

  scenecap::CaptionCmdOptions caption;
  auto* caption_cmd = app.add_subcommand("caption", "decode captions for detection files");
  caption_cmd->add_option("--ckpt", caption.ckpt, "checkpoint file")->required();
  caption_cmd->add_option("--detections", caption.detections, "detection file or directory")
      ->required();
  caption_cmd->add_option("--out", caption.out, "output captions JSON")->required();
  caption_cmd->add_option("--vocab", caption.vocab, "vocabulary file (default: next to ckpt)");
  caption_cmd->add_option("--labels", caption.labels, "label spaces file (default: next to ckpt)");
  caption_cmd->add_option("--beam", caption.beam, "beam size")->check(CLI::PositiveNumber);
  caption_cmd->add_option("--max-len", caption.max_len, "maximum words per caption");
  caption_cmd->add_flag("--dump-gates", caption.dump_gates, "emit per-word gate weights");
  caption_cmd->add_option("--iou-threshold", caption.graph.iou_threshold,
                          "geometry-graph IoU threshold");
  caption_cmd->add_option("--dist-threshold", caption.graph.dist_threshold,
                          "geometry-graph distance threshold");
  caption_cmd->add_option("--max-semantic-relations", caption.graph.max_semantic_relations,
                          "semantic-relation cap per image");

  scenecap::EvalCmdOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against references");
  eval_cmd->add_option("--pred", eval.pred, "predictions JSON")->required();
  eval_cmd->add_option("--refs", eval.refs, "reference captions JSON")->required();
  eval_cmd->add_option("--out", eval.out, "metrics output file");

  scenecap::GraphDumpCmdOptions dump;
  auto* dump_cmd = app.add_subcommand("graph-dump", "dump unit graphs and edge statistics");
  dump_cmd->add_option("--detections", dump.detections, "detection file or directory")
      ->required();
  dump_cmd->add_option("--kind", dump.kind, "semantic or geometry");
  dump_cmd->add_option("--out", dump.out, "output JSON")->required();
  dump_cmd->add_option("--iou-threshold", dump.graph.iou_threshold, "IoU threshold");
  dump_cmd->add_option("--dist-threshold", dump.graph.dist_threshold, "distance threshold");
  dump_cmd->add_option("--max-semantic-relations", dump.graph.max_semantic_relations,
                       "semantic-relation cap per image");
  dump_cmd->add_option("--sweep-iou", dump.sweep_iou, "IoU thresholds to sweep (geometry)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) return scenecap::cmd_synth(synth);
    if (*train_cmd) return scenecap::cmd_train(train);
    if (*caption_cmd) return scenecap::cmd_caption(caption);
    if (*eval_cmd) return scenecap::cmd_eval(eval);
    if (*dump_cmd) return scenecap::cmd_graph_dump(dump);
  } catch (const scenecap::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
