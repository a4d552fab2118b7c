#pragma once

#include "hpsg/annotation.hpp"
#include "hpsg/hpsg_graph.hpp"

#include "json.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace hpsg {

struct QueryRequest {
  std::string query_text;
  std::size_t k = 5;
  double tau = 0.07;

  void validate() const;
};

struct SubgraphResult {
  std::vector<int> seed_ids;  // descending score
  std::vector<int> node_ids;  // ascending
  std::vector<int> edge_ids;  // ascending
  std::map<int, double> scores;  // for every node in node_ids
  std::string context_text;
};

/// exp(cos(q, e) / tau) per node, indexed by node_id.
std::vector<double> score_nodes(const Hpsg& g, std::span<const float> query_vec, double tau, unsigned threads = 1);

/// Highest scores first; equal scores by ascending id. k > size returns all.
std::vector<int> top_k_seeds(std::span<const double> scores, std::size_t k);

/// Seeds plus everything within two hops, with every edge of g whose ends
/// both fall inside. `scores` is indexed by node_id.
SubgraphResult expand_two_hop(const Hpsg& g, std::span<const int> seeds, std::span<const double> scores);

std::string render_node_line(const Node& n);
std::string render_edge_line(const Edge& e);
std::string render_context(const SubgraphResult& sub, const Hpsg& g);

/// Embeds the query, scores, selects seeds, expands and renders.
SubgraphResult retrieve(const Hpsg& g, Annotator& annotator, const QueryRequest& req, unsigned threads = 1);

/// The whole graph rendered as one context, every node scored by `scores`.
std::string render_full_graph(const Hpsg& g, std::span<const double> scores);

std::size_t whitespace_tokens(const std::string& text);

nlohmann::json to_json(const SubgraphResult& sub);

}  // namespace hpsg
