#include "plotforge/corpus.hpp"

#include <fstream>

#include <json.hpp>

#include "plotforge/errors.hpp"

namespace plotforge::data {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path);
  return out;
}

std::vector<aux::Cluster> clusters_from_json(const json& j) {
  std::vector<aux::Cluster> out;
  for (const auto& c : j.at("coref_clusters")) {
    aux::Cluster cluster;
    for (const auto& m : c) {
      if (!m.is_array() || m.size() != 2) throw ValidationError("coref span must be [start, end]");
      const auto b = m[0].get<std::int64_t>();
      const auto e = m[1].get<std::int64_t>();
      if (b < 0 || e <= b) throw ValidationError("coref span [" + std::to_string(b) + ", " + std::to_string(e) + ") is invalid");
      cluster.push_back(Span{static_cast<std::size_t>(b), static_cast<std::size_t>(e)});
    }
    out.push_back(std::move(cluster));
  }
  return out;
}

json clusters_to_json(const std::vector<aux::Cluster>& clusters) {
  json arr = json::array();
  for (const auto& c : clusters) {
    json jc = json::array();
    for (const auto& m : c) jc.push_back({m.begin, m.end});
    arr.push_back(jc);
  }
  return arr;
}

Annotations annotations_from_json(const json& j) {
  Annotations a;
  if (j.contains("coref_clusters") && !j["coref_clusters"].is_null()) a.coref_clusters = clusters_from_json(j);
  if (j.contains("discourse_labels") && !j["discourse_labels"].is_null()) {
    std::vector<aux::Label> labels;
    for (const auto& l : j["discourse_labels"]) labels.push_back(aux::parse_label(l.get<std::string>()));
    a.discourse_labels = std::move(labels);
  }
  return a;
}

std::string require_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw ValidationError(std::string("missing string field \"") + key + "\"");
  return j[key].get<std::string>();
}

}  // namespace

std::vector<CorpusRecord> read_corpus(const std::string& path, bool lenient, ReadReport* report) {
  auto in = open_in(path);
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      if (!j.is_object()) throw ValidationError("record is not a JSON object");
      CorpusRecord r;
      r.prompt = require_string(j, "prompt");
      r.story = require_string(j, "story");
      r.annotations = annotations_from_json(j);
      r.line = line_no;
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      const std::string msg = path + ":" + std::to_string(line_no) + ": " + e.what();
      if (!lenient) throw ValidationError(msg);
      if (report) {
        ++report->skipped;
        report->messages.push_back(msg);
      }
    }
  }
  return out;
}

void write_triples(const std::string& path, const std::vector<outline::StoryTriple>& triples) {
  auto out = open_out(path);
  for (const auto& t : triples) out << json{{"prompt", t.prompt}, {"outline", t.outline}, {"story", t.story}}.dump() << '\n';
}

std::vector<outline::StoryTriple> read_triples(const std::string& path) {
  auto in = open_in(path);
  std::vector<outline::StoryTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({require_string(j, "prompt"), require_string(j, "outline"), require_string(j, "story")});
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_sidecar(const std::string& path, const std::vector<Annotations>& annotations) {
  auto out = open_out(path);
  for (const auto& a : annotations) {
    json j = json::object();
    j["coref_clusters"] = a.coref_clusters ? clusters_to_json(*a.coref_clusters) : json(nullptr);
    if (a.discourse_labels) {
      json labels = json::array();
      for (auto l : *a.discourse_labels) labels.push_back(std::string(aux::label_name(l)));
      j["discourse_labels"] = labels;
    } else {
      j["discourse_labels"] = nullptr;
    }
    out << j.dump() << '\n';
  }
}

std::vector<Annotations> read_sidecar(const std::string& path) {
  auto in = open_in(path);
  std::vector<Annotations> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(annotations_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_pairs(const std::string& path, const std::vector<aux::MarkerPair>& pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) {
    out << json{{"s1", p.s1}, {"s2", p.s2}, {"label", std::string(aux::label_name(p.label))}}.dump() << '\n';
  }
}

std::vector<aux::MarkerPair> read_pairs(const std::string& path) {
  auto in = open_in(path);
  std::vector<aux::MarkerPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({require_string(j, "s1"), require_string(j, "s2"), aux::parse_label(require_string(j, "label"))});
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> read_story_lines(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line.front() == '{') {
      const auto j = json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.is_object() && j.contains("story") && j["story"].is_string()) {
        out.push_back(j["story"].get<std::string>());
        continue;
      }
    }
    out.push_back(line);
  }
  return out;
}

}  // namespace plotforge::data
