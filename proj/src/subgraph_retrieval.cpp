#include "hpsg/subgraph_retrieval.hpp"

#include "hpsg/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

namespace hpsg {

void QueryRequest::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
}

namespace {

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // keep "-0.00" out of the context
  if (std::string(buf) == "-0.00") return "0.00";
  return buf;
}

std::string fmt(const Vec3& v) { return "(" + fmt(v[0]) + ", " + fmt(v[1]) + ", " + fmt(v[2]) + ")"; }

}  // namespace

std::vector<double> score_nodes(const Hpsg& g, std::span<const float> query_vec, double tau, unsigned threads) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  std::vector<double> scores(g.nodes.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) scores[i] = std::exp(cosine(g.nodes[i].embedding, query_vec) / tau);
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(g.nodes.size() / 64 + 1)));
  if (threads == 1) {
    work(0, scores.size());
    return scores;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (scores.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(scores.size(), b + chunk);
    if (b < e) pool.emplace_back(work, b, e);
  }
  for (auto& th : pool) th.join();
  return scores;
}

std::vector<int> top_k_seeds(std::span<const double> scores, std::size_t k) {
  std::vector<int> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  ids.resize(k);
  return ids;
}

SubgraphResult expand_two_hop(const Hpsg& g, std::span<const int> seeds, std::span<const double> scores) {
  const std::size_t n = g.nodes.size();
  std::vector<int> depth(n, -1);
  std::vector<int> frontier;
  for (int s : seeds) {
    if (s < 0 || static_cast<std::size_t>(s) >= n) throw Error("subgraph_retrieval", "seed out of range");
    if (depth[s] < 0) {
      depth[s] = 0;
      frontier.push_back(s);
    }
  }
  for (int hop = 1; hop <= 2; ++hop) {
    std::vector<int> next;
    for (int u : frontier) {
      for (int v : g.adjacency[u]) {
        if (depth[v] < 0) {
          depth[v] = hop;
          next.push_back(v);
        }
      }
    }
    frontier = std::move(next);
  }

  SubgraphResult out;
  out.seed_ids.assign(seeds.begin(), seeds.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (depth[i] < 0) continue;
    out.node_ids.push_back(static_cast<int>(i));
    out.scores[static_cast<int>(i)] = scores[i];
  }
  for (const auto& e : g.edges) {
    if (depth[e.a] >= 0 && depth[e.b] >= 0) out.edge_ids.push_back(e.edge_id);
  }
  return out;
}

std::string render_node_line(const Node& n) {
  std::string label;
  Aabb box;
  Vec3 centroid = Vec3::Zero();
  bool geometric = true;
  if (const auto* s = std::get_if<SceneTypeInfo>(&n.payload)) {
    label = s->scene_type;
    geometric = false;
  } else if (const auto* p = std::get_if<StructureInfo>(&n.payload)) {
    label = std::string(to_string(p->label));
    box = p->bbox;
    centroid = p->centroid;
  } else {
    const auto& o = std::get<ObjectInfo>(n.payload);
    label = o.canonical_tag;
    box = o.bbox;
    centroid = o.centroid;
  }
  std::string line = "[" + std::to_string(n.node_id) + "] (" + std::to_string(n.level) + ", " + label + ") " + n.caption;
  if (geometric) line += " @ " + fmt(centroid) + " " + fmt(box.min) + "-" + fmt(box.max);
  return line;
}

std::string render_edge_line(const Edge& e) {
  return "[" + std::to_string(e.a) + "] --" + e.relation + "--> [" + std::to_string(e.b) + "]";
}

std::string render_context(const SubgraphResult& sub, const Hpsg& g) {
  std::vector<int> nodes = sub.node_ids;
  std::stable_sort(nodes.begin(), nodes.end(), [&](int a, int b) {
    const double sa = sub.scores.at(a), sb = sub.scores.at(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  std::vector<int> edges = sub.edge_ids;
  std::sort(edges.begin(), edges.end(), [&](int a, int b) {
    const auto& ea = g.edges.at(a);
    const auto& eb = g.edges.at(b);
    if (ea.level != eb.level) return ea.level < eb.level;
    return ea.edge_id < eb.edge_id;
  });
  std::string text;
  for (int id : nodes) text += render_node_line(g.node(id)) + "\n";
  for (int id : edges) text += render_edge_line(g.edges.at(id)) + "\n";
  return text;
}

SubgraphResult retrieve(const Hpsg& g, Annotator& annotator, const QueryRequest& req, unsigned threads) {
  req.validate();
  const auto query = annotator.embed_text(req.query_text);
  const auto scores = score_nodes(g, query, req.tau, threads);
  const auto seeds = top_k_seeds(scores, req.k);
  auto sub = expand_two_hop(g, seeds, scores);
  sub.context_text = render_context(sub, g);
  return sub;
}

std::string render_full_graph(const Hpsg& g, std::span<const double> scores) {
  std::vector<int> all(g.nodes.size());
  std::iota(all.begin(), all.end(), 0);
  const auto sub = expand_two_hop(g, all, scores);
  return render_context(sub, g);
}

std::size_t whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string tok;
  while (in >> tok) ++n;
  return n;
}

nlohmann::json to_json(const SubgraphResult& sub) {
  nlohmann::json scores = nlohmann::json::object();
  for (const auto& [id, s] : sub.scores) scores[std::to_string(id)] = s;
  return nlohmann::json{{"seeds", sub.seed_ids},
                        {"nodes", sub.node_ids},
                        {"edges", sub.edge_ids},
                        {"scores", std::move(scores)},
                        {"context_text", sub.context_text}};
}

}  // namespace hpsg
