#include "hpsg/annotation.hpp"

#include "hpsg/error.hpp"

#include "httplib.h"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace hpsg {

using json = nlohmann::json;

std::string_view to_string(RelationLabel r) {
  switch (r) {
    case RelationLabel::On: return "on";
    case RelationLabel::In: return "in";
    case RelationLabel::NextTo: return "next_to";
    case RelationLabel::None: return "none";
  }
  return "none";
}

RelationLabel relation_from_string(std::string_view s) {
  if (s == "on") return RelationLabel::On;
  if (s == "in") return RelationLabel::In;
  if (s == "next_to") return RelationLabel::NextTo;
  if (s == "none") return RelationLabel::None;
  throw Error("annotation", "unknown relation '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Stubs

namespace {

const std::set<std::string_view>& stopwords() {
  static const std::set<std::string_view> words = {
      "a",    "an",    "the",   "is",   "are",  "was",   "were",  "be",    "this",  "that",  "these",
      "those", "it",   "its",   "of",   "on",   "in",    "at",    "to",    "for",   "with",  "near",
      "next", "by",    "from",  "and",  "or",   "what",  "which", "who",   "where", "how",   "there",
      "here", "some",  "any",   "do",   "does", "into",  "onto",  "under", "above", "below", "behind",
      "beside", "over", "inside", "i",  "my",   "me",    "you",   "your",  "can",   "see"};
  return words;
}

// Words that end the leading noun phrase of a caption.
const std::set<std::string_view>& phrase_breaks() {
  static const std::set<std::string_view> words = {
      "on",    "in",     "at",    "of",     "with",   "near",   "next",  "by",   "from", "under",
      "above", "below",  "behind", "beside", "over",  "inside", "into",  "onto", "for",  "to",
      "and",   "that",   "which", "is",     "are"};
  return words;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) {
  // (0, 1], never zero so log() is finite.
  return (static_cast<double>(splitmix_next(state) >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(std::string_view token) { return stopwords().count(token) > 0; }

CaptionRefinement stub_refine_captions(const std::vector<std::string>& raw) {
  CaptionRefinement out;
  if (raw.empty()) {
    out.caption = "object";
    out.canonical_tag = "object";
    out.tag_set = {"object"};
    return out;
  }
  for (const auto& c : raw) {
    if (c.size() > out.caption.size()) out.caption = c;
  }

  std::vector<std::string> heads;
  std::set<std::string> tags;
  for (const auto& c : raw) {
    const auto tokens = tokenize(c);
    std::string head;
    for (const auto& t : tokens) {
      if (phrase_breaks().count(t) && !head.empty()) break;
      if (!is_stopword(t)) head = t;
    }
    if (!head.empty()) heads.push_back(head);
    for (const auto& t : tokens) {
      if (!is_stopword(t)) tags.insert(t);
    }
  }
  // Most frequent head noun; ties go to the earliest.
  std::map<std::string, int> freq;
  for (const auto& h : heads) ++freq[h];
  int best = 0;
  for (const auto& h : heads) {
    if (freq[h] > best) {
      best = freq[h];
      out.canonical_tag = h;
    }
  }
  if (out.canonical_tag.empty()) out.canonical_tag = "object";
  if (out.caption.empty()) out.caption = out.canonical_tag;
  out.tag_set.assign(tags.begin(), tags.end());
  if (out.tag_set.empty()) out.tag_set = {out.canonical_tag};
  return out;
}

RelationLabel stub_estimate_relation(const ObjectSummary& a, const ObjectSummary& b) {
  constexpr double kContact = 0.05;
  constexpr double kSupportOverlap = 0.3;
  constexpr double kInflate = 0.05;
  constexpr double kNear = 1.0;

  const double ox = std::max(0.0, std::min(a.bbox.max[0], b.bbox.max[0]) - std::max(a.bbox.min[0], b.bbox.min[0]));
  const double oy = std::max(0.0, std::min(a.bbox.max[1], b.bbox.max[1]) - std::max(a.bbox.min[1], b.bbox.min[1]));
  const double footprint = (a.bbox.max[0] - a.bbox.min[0]) * (a.bbox.max[1] - a.bbox.min[1]);
  const double support = footprint > 0.0 ? ox * oy / footprint : 0.0;
  if (std::abs(a.bbox.min[2] - b.bbox.max[2]) <= kContact && support > kSupportOverlap) return RelationLabel::On;

  bool inside = true;
  for (int k = 0; k < 3; ++k) {
    if (a.bbox.min[k] < b.bbox.min[k] - kInflate || a.bbox.max[k] > b.bbox.max[k] + kInflate) inside = false;
  }
  if (inside) return RelationLabel::In;
  if ((a.centroid - b.centroid).norm() < kNear) return RelationLabel::NextTo;
  return RelationLabel::None;
}

std::string stub_summarize_scene_type(const std::vector<std::string>& captions) {
  static const std::set<std::string_view> office = {"desk", "monitor", "keyboard", "whiteboard"};
  for (const auto& c : captions) {
    for (const auto& t : tokenize(c)) {
      if (office.count(t)) return "office";
    }
  }
  return "room";
}

std::vector<float> stub_embed_text(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error("annotation", "embedding dimension must be positive");
  auto tokens = tokenize(text);
  std::vector<std::string> content;
  for (auto& t : tokens) {
    if (!is_stopword(t)) content.push_back(t);
  }
  if (content.empty()) content = tokens;
  if (content.empty()) content.emplace_back(text);

  // Each token hashes to a fixed Gaussian direction; the text is their sum.
  std::vector<double> acc(dim, 0.0);
  for (const auto& t : content) {
    std::uint64_t state = fnv1a64(t) ^ (seed * 0x9e3779b97f4a7c15ull);
    for (std::size_t i = 0; i < dim; i += 2) {
      const double r = std::sqrt(-2.0 * std::log(unit_uniform(state)));
      const double theta = 2.0 * 3.14159265358979323846 * unit_uniform(state);
      acc[i] += r * std::cos(theta);
      if (i + 1 < dim) acc[i + 1] += r * std::sin(theta);
    }
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

// ---------------------------------------------------------------------------
// Protocol

json make_request(std::uint64_t request_id, std::string_view role, json payload) {
  return json{{"request_id", request_id}, {"role", std::string(role)}, {"payload", std::move(payload)}};
}

json unwrap_response(const json& response, std::uint64_t request_id) {
  if (!response.is_object() || !response.contains("request_id") || !response.contains("ok")) {
    throw AnnotatorError(request_id, "malformed response");
  }
  if (!response["request_id"].is_number_unsigned() && !response["request_id"].is_number_integer()) {
    throw AnnotatorError(request_id, "malformed request_id");
  }
  if (response["request_id"].get<std::uint64_t>() != request_id) {
    throw AnnotatorError(request_id, "response id mismatch");
  }
  if (!response["ok"].is_boolean() || !response["ok"].get<bool>()) {
    throw AnnotatorError(request_id, "backend reported failure");
  }
  if (!response.contains("result")) throw AnnotatorError(request_id, "response has no result");
  return response["result"];
}

json summary_to_json(const ObjectSummary& s) {
  auto vec = [](const Vec3& v) { return json::array({v[0], v[1], v[2]}); };
  return json{{"caption", s.caption},
              {"centroid", vec(s.centroid)},
              {"bbox", json{{"min", vec(s.bbox.min)}, {"max", vec(s.bbox.max)}}}};
}

// ---------------------------------------------------------------------------
// Transports

ProcessTransport::ProcessTransport(std::string command, int timeout_ms)
    : command_(std::move(command)), timeout_ms_(timeout_ms) {}

ProcessTransport::~ProcessTransport() { shutdown(); }

void ProcessTransport::spawn(std::uint64_t request_id) {
  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0) throw AnnotatorError(request_id, "pipe() failed");
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw AnnotatorError(request_id, "pipe() failed");
  }
  ::signal(SIGPIPE, SIG_IGN);
  const pid_t pid = ::fork();
  if (pid < 0) throw AnnotatorError(request_id, "fork() failed");
  if (pid == 0) {
    // own process group, so a timeout can take down whatever the shell started
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

void ProcessTransport::shutdown() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == 0) {
      ::kill(-pid_, SIGTERM);
      ::waitpid(pid_, &status, 0);
    } else {
      ::kill(-pid_, SIGTERM);
    }
  }
  pid_ = -1;
  pending_.clear();
}

json ProcessTransport::roundtrip(const json& request, std::uint64_t request_id) {
  std::lock_guard lock(mutex_);
  if (pid_ < 0) spawn(request_id);

  const std::string line = request.dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(to_child_, line.data() + written, line.size() - written);
    if (n <= 0) {
      shutdown();
      throw AnnotatorError(request_id, "backend closed its input");
    }
    written += static_cast<std::size_t>(n);
  }

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
  while (pending_.find('\n') == std::string::npos) {
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) {
      shutdown();
      throw AnnotatorError(request_id, "backend timed out");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left));
    if (ready <= 0) continue;
    char buf[4096];
    const auto n = ::read(from_child_, buf, sizeof buf);
    if (n <= 0) {
      shutdown();
      throw AnnotatorError(request_id, "backend exited");
    }
    pending_.append(buf, static_cast<std::size_t>(n));
  }
  const auto eol = pending_.find('\n');
  const std::string reply = pending_.substr(0, eol);
  pending_.erase(0, eol + 1);
  try {
    return json::parse(reply);
  } catch (const json::exception&) {
    throw AnnotatorError(request_id, "backend reply is not JSON");
  }
}

HttpTransport::HttpTransport(std::string url, int timeout_ms) : timeout_ms_(timeout_ms) {
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) throw Error("annotation", "only http:// annotator URLs are supported");
  const auto rest = url.substr(scheme.size());
  const auto slash = rest.find('/');
  host_ = scheme + rest.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
}

json HttpTransport::roundtrip(const json& request, std::uint64_t request_id) {
  httplib::Client client(host_);
  const auto secs = timeout_ms_ / 1000;
  const auto usecs = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  auto res = client.Post(path_, request.dump(), "application/json");
  if (!res) throw AnnotatorError(request_id, "HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw AnnotatorError(request_id, "HTTP status " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::exception&) {
    throw AnnotatorError(request_id, "backend reply is not JSON");
  }
}

// ---------------------------------------------------------------------------
// Remote annotator

RemoteAnnotator::RemoteAnnotator(std::unique_ptr<Transport> transport, std::size_t dim)
    : transport_(std::move(transport)), dim_(dim) {}

json RemoteAnnotator::call(std::string_view role, json payload, std::uint64_t& id) {
  {
    std::lock_guard lock(mutex_);
    id = next_id_++;
  }
  return unwrap_response(transport_->roundtrip(make_request(id, role, std::move(payload)), id), id);
}

CaptionRefinement RemoteAnnotator::refine_captions(const std::vector<std::string>& raw, const std::string& tmpl) {
  std::uint64_t id = 0;
  const auto result = call("caption_refine", json{{"captions", raw}, {"template", tmpl}}, id);
  try {
    CaptionRefinement out;
    out.caption = result.at("caption").get<std::string>();
    out.canonical_tag = result.at("canonical_tag").get<std::string>();
    out.tag_set = result.at("tag_set").get<std::vector<std::string>>();
    std::sort(out.tag_set.begin(), out.tag_set.end());
    out.tag_set.erase(std::unique(out.tag_set.begin(), out.tag_set.end()), out.tag_set.end());
    if (out.caption.empty()) throw AnnotatorError(id, "empty caption");
    return out;
  } catch (const json::exception& e) {
    throw AnnotatorError(id, std::string("bad caption_refine result: ") + e.what());
  }
}

RelationLabel RemoteAnnotator::estimate_relation(const ObjectSummary& a, const ObjectSummary& b) {
  std::uint64_t id = 0;
  const auto result = call("relation", json{{"a", summary_to_json(a)}, {"b", summary_to_json(b)}}, id);
  if (!result.is_string()) throw AnnotatorError(id, "relation result must be a string");
  try {
    return relation_from_string(result.get<std::string>());
  } catch (const Error& e) {
    throw AnnotatorError(id, e.what());
  }
}

std::string RemoteAnnotator::summarize_scene_type(const std::vector<std::string>& captions) {
  std::uint64_t id = 0;
  const auto result = call("scene_type", json{{"captions", captions}}, id);
  if (!result.is_string() || result.get<std::string>().empty()) {
    throw AnnotatorError(id, "scene_type result must be a non-empty string");
  }
  return result.get<std::string>();
}

std::vector<float> RemoteAnnotator::embed_text(const std::string& text) {
  std::uint64_t id = 0;
  const auto result = call("embed", json{{"text", text}}, id);
  std::vector<double> v;
  try {
    v = result.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw AnnotatorError(id, "embed result must be a float array");
  }
  if (v.size() != dim_) throw AnnotatorError(id, "embedding has wrong dimension");
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw AnnotatorError(id, "embedding has zero norm");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

// ---------------------------------------------------------------------------
// Fallback

FallbackAnnotator::FallbackAnnotator(std::unique_ptr<Annotator> primary, StubAnnotator stub)
    : primary_(std::move(primary)), stub_(stub) {}

template <class Primary, class Stub>
auto FallbackAnnotator::guarded(Primary&& primary, Stub&& stub) {
  try {
    return primary();
  } catch (const AnnotatorError& e) {
    ++fallbacks_;
    std::cerr << "warning: " << e.what() << "; using stub\n";
    return stub();
  }
}

CaptionRefinement FallbackAnnotator::refine_captions(const std::vector<std::string>& raw, const std::string& tmpl) {
  return guarded([&] { return primary_->refine_captions(raw, tmpl); },
                 [&] { return stub_.refine_captions(raw, tmpl); });
}

RelationLabel FallbackAnnotator::estimate_relation(const ObjectSummary& a, const ObjectSummary& b) {
  return guarded([&] { return primary_->estimate_relation(a, b); }, [&] { return stub_.estimate_relation(a, b); });
}

std::string FallbackAnnotator::summarize_scene_type(const std::vector<std::string>& captions) {
  return guarded([&] { return primary_->summarize_scene_type(captions); },
                 [&] { return stub_.summarize_scene_type(captions); });
}

std::vector<float> FallbackAnnotator::embed_text(const std::string& text) {
  return guarded([&] { return primary_->embed_text(text); }, [&] { return stub_.embed_text(text); });
}

std::unique_ptr<Annotator> make_annotator(const AnnotationConfig& cfg) {
  StubAnnotator stub(cfg.embedding_dim, cfg.seed);
  if (const char* cmd = std::getenv("HPSG_ANNOTATOR_CMD"); cmd && *cmd) {
    auto remote = std::make_unique<RemoteAnnotator>(std::make_unique<ProcessTransport>(cmd, cfg.timeout_ms),
                                                    cfg.embedding_dim);
    return std::make_unique<FallbackAnnotator>(std::move(remote), stub);
  }
  if (const char* url = std::getenv("HPSG_ANNOTATOR_URL"); url && *url) {
    auto remote = std::make_unique<RemoteAnnotator>(std::make_unique<HttpTransport>(url, cfg.timeout_ms),
                                                    cfg.embedding_dim);
    return std::make_unique<FallbackAnnotator>(std::move(remote), stub);
  }
  return std::make_unique<StubAnnotator>(stub);
}

// ---------------------------------------------------------------------------
// captions.json

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("annotation", "cannot open captions file " + path.string());
  std::vector<CaptionRecord> out;
  try {
    const json doc = json::parse(in);
    for (const auto& r : doc) {
      CaptionRecord rec;
      rec.instance_id = r.at("instance_id").get<std::int64_t>();
      rec.view_id = r.at("view_id").get<int>();
      rec.caption = r.at("caption").get<std::string>();
      rec.seg_confidence = r.at("seg_confidence").get<double>();
      out.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw Error("annotation", "malformed captions file " + path.string() + ": " + e.what());
  }
  return out;
}

void save_captions(const std::filesystem::path& path, std::span<const CaptionRecord> records) {
  json doc = json::array();
  for (const auto& r : records) {
    doc.push_back(json{{"instance_id", r.instance_id},
                       {"view_id", r.view_id},
                       {"caption", r.caption},
                       {"seg_confidence", r.seg_confidence}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("annotation", "cannot write " + path.string());
  out << doc.dump(1) << "\n";
}

std::vector<std::string> select_captions(std::span<const CaptionRecord> records,
                                         std::span<const std::pair<int, std::int64_t>> detections,
                                         std::size_t limit) {
  std::set<std::pair<int, std::int64_t>> wanted(detections.begin(), detections.end());
  std::vector<const CaptionRecord*> hits;
  for (const auto& r : records) {
    if (wanted.count({r.view_id, r.instance_id})) hits.push_back(&r);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const CaptionRecord* a, const CaptionRecord* b) {
    if (a->seg_confidence != b->seg_confidence) return a->seg_confidence > b->seg_confidence;
    if (a->view_id != b->view_id) return a->view_id < b->view_id;
    return a->instance_id < b->instance_id;
  });
  std::vector<std::string> out;
  for (const auto* r : hits) {
    if (out.size() >= limit) break;
    out.push_back(r->caption);
  }
  return out;
}

}  // namespace hpsg
