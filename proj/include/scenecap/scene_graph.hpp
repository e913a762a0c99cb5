#pragma once

#include <string>
#include <vector>

#include "scenecap/geometry.hpp"

namespace scenecap {

/// Reserved row in the attribute label space used to pad attribute units.
constexpr int kNoAttrLabel = 0;

struct AttributePrediction {
  int label_id = 0;
  double score = 0.0;
};

struct DetectedObject {
  int id = 0;  // unique within the image; not necessarily dense
  Box box;
  int label_id = 0;
  double score = 0.0;
  std::vector<double> appearance;               // region feature, length D_v
  std::vector<AttributePrediction> attributes;  // sorted by descending score
};

struct DetectedRelation {
  int subject_id = 0;
  int object_id = 0;
  int predicate_id = 0;
  double score = 0.0;
};

/// Raw per-image detector outputs; the input side of graph construction.
struct SceneDetections {
  int image_id = 0;
  ImageSize image;
  std::vector<DetectedObject> objects;
  std::vector<DetectedRelation> relations;
};

enum class GraphKind { semantic, geometry };
enum class NodeType { object, attribute, relation };
enum class EdgeKind { object_to_attribute, object_to_relation, relation_to_object };

struct NodeRef {
  NodeType type = NodeType::object;
  int index = 0;
  bool operator==(const NodeRef&) const = default;
};

struct GraphEdge {
  EdgeKind kind = EdgeKind::object_to_attribute;
  NodeRef from;
  NodeRef to;
};

/// Aggregated attribute unit: the top-N_a attribute labels of one object,
/// padded with kNoAttrLabel.
struct AttributeUnit {
  int object_index = 0;
  std::vector<int> labels;
};

/// Relation unit connecting two objects (by index into object_units).
/// Semantic graphs carry a predicate id; geometry graphs carry the
/// pairwise geometry cue of the (subject, object) ordering.
struct RelationUnit {
  int subject = 0;
  int object = 0;
  int predicate_id = -1;
  RelGeomCue cue{};
  double score = 0.0;
};

/// Unified unit graph for one image. Objects, attribute units, and relation
/// units are all nodes; the object/relation subgraph is bipartite
/// (edges only o->r and r->o, plus o->a ownership edges).
struct SceneGraph {
  GraphKind kind = GraphKind::semantic;
  int image_id = 0;
  ImageSize image;
  std::vector<DetectedObject> object_units;
  std::vector<AttributeUnit> attribute_units;  // exactly one per object, aligned by index
  std::vector<RelationUnit> relation_units;
  std::vector<GraphEdge> edges;
};

struct GraphConfig {
  double iou_threshold = 0.2;
  double dist_threshold = 0.5;
  int n_attrs = 3;
  int max_semantic_relations = 20;
};

/// Top-n_attrs attribute labels of an object, highest confidence first,
/// padded with kNoAttrLabel to exactly n_attrs entries.
std::vector<int> aggregate_attributes(const DetectedObject& obj, int n_attrs);

/// Relation units are the top-K detected relations by score, each drawn as
/// subject -> relation -> object. Throws Error on relations referencing
/// unknown object ids.
SceneGraph build_semantic_graph(const SceneDetections& dets, const GraphConfig& cfg);

/// One relation unit per unordered object pair whose IoU and normalized
/// center distance pass the thresholds. The larger-area box is the subject
/// (ties: lower object id).
SceneGraph build_geometry_graph(const SceneDetections& dets, const GraphConfig& cfg);

struct GraphViolation {
  enum class Kind {
    duplicate_attribute_unit,
    non_bipartite_edge,
    dangling_edge,
    missing_relation_link,
  };
  Kind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<GraphViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Structural check of all SceneGraph invariants.
ValidationReport validate_graph(const SceneGraph& g);

}  // namespace scenecap
