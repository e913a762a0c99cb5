#include "scenecap/scene_graph.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "scenecap/util.hpp"

namespace scenecap {

std::vector<int> aggregate_attributes(const DetectedObject& obj, int n_attrs) {
  if (n_attrs < 1) throw Error("aggregate_attributes: n_attrs must be >= 1");
  std::vector<AttributePrediction> preds = obj.attributes;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const AttributePrediction& a, const AttributePrediction& b) {
                     return a.score > b.score;
                   });
  std::vector<int> labels(static_cast<size_t>(n_attrs), kNoAttrLabel);
  for (size_t i = 0; i < preds.size() && i < static_cast<size_t>(n_attrs); ++i)
    labels[i] = preds[i].label_id;
  return labels;
}

namespace {

void add_object_and_attribute_units(const SceneDetections& dets, const GraphConfig& cfg,
                                    SceneGraph& g) {
  g.image_id = dets.image_id;
  g.image = dets.image;
  g.object_units = dets.objects;
  for (size_t i = 0; i < dets.objects.size(); ++i) {
    AttributeUnit au;
    au.object_index = static_cast<int>(i);
    au.labels = aggregate_attributes(dets.objects[i], cfg.n_attrs);
    g.attribute_units.push_back(std::move(au));
    g.edges.push_back({EdgeKind::object_to_attribute,
                       {NodeType::object, static_cast<int>(i)},
                       {NodeType::attribute, static_cast<int>(i)}});
  }
}

void add_relation_edges(SceneGraph& g) {
  for (size_t r = 0; r < g.relation_units.size(); ++r) {
    const RelationUnit& unit = g.relation_units[r];
    g.edges.push_back({EdgeKind::object_to_relation,
                       {NodeType::object, unit.subject},
                       {NodeType::relation, static_cast<int>(r)}});
    g.edges.push_back({EdgeKind::relation_to_object,
                       {NodeType::relation, static_cast<int>(r)},
                       {NodeType::object, unit.object}});
  }
}

}  // namespace

SceneGraph build_semantic_graph(const SceneDetections& dets, const GraphConfig& cfg) {
  SceneGraph g;
  g.kind = GraphKind::semantic;
  add_object_and_attribute_units(dets, cfg, g);

  std::unordered_map<int, int> id_to_index;
  for (size_t i = 0; i < dets.objects.size(); ++i)
    id_to_index[dets.objects[i].id] = static_cast<int>(i);

  for (const DetectedRelation& rel : dets.relations) {
    auto describe = [&rel]() {
      return "relation (subject " + std::to_string(rel.subject_id) + ", predicate " +
             std::to_string(rel.predicate_id) + ", object " + std::to_string(rel.object_id) +
             ")";
    };
    if (rel.subject_id == rel.object_id)
      throw Error("build_semantic_graph: image " + std::to_string(dets.image_id) + ": " +
                  describe() + " is a self-loop");
    for (int endpoint : {rel.subject_id, rel.object_id}) {
      if (!id_to_index.count(endpoint))
        throw Error("build_semantic_graph: image " + std::to_string(dets.image_id) + ": " +
                    describe() + " references unknown object id " + std::to_string(endpoint));
    }
  }

  // Keep the top-K by detector score; ties keep input order.
  std::vector<int> order(dets.relations.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets.relations[static_cast<size_t>(a)].score >
           dets.relations[static_cast<size_t>(b)].score;
  });
  size_t keep = std::min(order.size(), static_cast<size_t>(cfg.max_semantic_relations));
  for (size_t k = 0; k < keep; ++k) {
    const DetectedRelation& rel = dets.relations[static_cast<size_t>(order[k])];
    RelationUnit unit;
    unit.subject = id_to_index[rel.subject_id];
    unit.object = id_to_index[rel.object_id];
    unit.predicate_id = rel.predicate_id;
    unit.score = rel.score;
    g.relation_units.push_back(unit);
  }
  add_relation_edges(g);
  return g;
}

SceneGraph build_geometry_graph(const SceneDetections& dets, const GraphConfig& cfg) {
  SceneGraph g;
  g.kind = GraphKind::geometry;
  add_object_and_attribute_units(dets, cfg, g);

  for (size_t i = 0; i < dets.objects.size(); ++i) {
    for (size_t j = i + 1; j < dets.objects.size(); ++j) {
      const DetectedObject& a = dets.objects[i];
      const DetectedObject& b = dets.objects[j];
      if (iou(a.box, b.box) < cfg.iou_threshold) continue;
      if (center_distance_norm(a.box, b.box, dets.image) > cfg.dist_threshold) continue;
      // Larger box is the subject; equal areas fall back to the lower id.
      bool a_is_subject = a.box.area() > b.box.area() ||
                          (a.box.area() == b.box.area() && a.id < b.id);
      size_t si = a_is_subject ? i : j;
      size_t oi = a_is_subject ? j : i;
      RelationUnit unit;
      unit.subject = static_cast<int>(si);
      unit.object = static_cast<int>(oi);
      unit.cue = relation_geometry_cue(dets.objects[si].box, dets.objects[oi].box, dets.image);
      g.relation_units.push_back(unit);
    }
  }
  add_relation_edges(g);
  return g;
}

ValidationReport validate_graph(const SceneGraph& g) {
  ValidationReport report;
  auto violate = [&](GraphViolation::Kind kind, std::string msg) {
    report.violations.push_back({kind, std::move(msg)});
  };

  int n_obj = static_cast<int>(g.object_units.size());
  int n_attr = static_cast<int>(g.attribute_units.size());
  int n_rel = static_cast<int>(g.relation_units.size());

  // Exactly one attribute unit per object.
  std::vector<int> attr_count(static_cast<size_t>(n_obj), 0);
  for (const AttributeUnit& au : g.attribute_units) {
    if (au.object_index < 0 || au.object_index >= n_obj) {
      violate(GraphViolation::Kind::dangling_edge,
              "attribute unit references missing object " + std::to_string(au.object_index));
      continue;
    }
    if (++attr_count[static_cast<size_t>(au.object_index)] > 1)
      violate(GraphViolation::Kind::duplicate_attribute_unit,
              "duplicate attribute unit on object " + std::to_string(au.object_index));
  }
  for (int i = 0; i < n_obj; ++i)
    if (attr_count[static_cast<size_t>(i)] == 0)
      violate(GraphViolation::Kind::duplicate_attribute_unit,
              "object " + std::to_string(i) + " has no attribute unit");

  auto in_range = [&](const NodeRef& ref) {
    int limit = ref.type == NodeType::object ? n_obj
                : ref.type == NodeType::attribute ? n_attr
                                                  : n_rel;
    return ref.index >= 0 && ref.index < limit;
  };

  std::vector<int> rel_in(static_cast<size_t>(n_rel), 0);
  std::vector<int> rel_out(static_cast<size_t>(n_rel), 0);
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const GraphEdge& edge = g.edges[e];
    if (!in_range(edge.from) || !in_range(edge.to)) {
      violate(GraphViolation::Kind::dangling_edge,
              "edge " + std::to_string(e) + " has an endpoint out of range");
      continue;
    }
    bool typed_ok = false;
    switch (edge.kind) {
      case EdgeKind::object_to_attribute:
        typed_ok = edge.from.type == NodeType::object && edge.to.type == NodeType::attribute;
        break;
      case EdgeKind::object_to_relation:
        typed_ok = edge.from.type == NodeType::object && edge.to.type == NodeType::relation;
        if (typed_ok) rel_in[static_cast<size_t>(edge.to.index)]++;
        break;
      case EdgeKind::relation_to_object:
        typed_ok = edge.from.type == NodeType::relation && edge.to.type == NodeType::object;
        if (typed_ok) rel_out[static_cast<size_t>(edge.from.index)]++;
        break;
    }
    if (!typed_ok)
      violate(GraphViolation::Kind::non_bipartite_edge,
              "edge " + std::to_string(e) + " connects incompatible node types");
  }

  for (int r = 0; r < n_rel; ++r) {
    if (rel_in[static_cast<size_t>(r)] != 1 || rel_out[static_cast<size_t>(r)] != 1)
      violate(GraphViolation::Kind::missing_relation_link,
              "relation unit " + std::to_string(r) + " has " +
                  std::to_string(rel_in[static_cast<size_t>(r)]) + " in-edges and " +
                  std::to_string(rel_out[static_cast<size_t>(r)]) + " out-edges");
    const RelationUnit& unit = g.relation_units[static_cast<size_t>(r)];
    if (unit.subject < 0 || unit.subject >= n_obj || unit.object < 0 || unit.object >= n_obj)
      violate(GraphViolation::Kind::dangling_edge,
              "relation unit " + std::to_string(r) + " references missing objects");
  }
  return report;
}

}  // namespace scenecap
