#pragma once

// JSON-lines files used by the pipeline.
//
//   corpus      {"prompt", "story", "coref_clusters"?, "discourse_labels"?}
//   triples     {"prompt", "outline", "story"}
//   sidecar     {"coref_clusters", "discourse_labels"?}, one line per triple
//   pairs       {"s1", "s2", "label"}
//
// coref_clusters is a list of clusters, each a list of [start, end) token
// spans over the tokenized story.

#include <optional>
#include <string>
#include <vector>

#include "plotforge/coref.hpp"
#include "plotforge/discourse.hpp"
#include "plotforge/outline.hpp"

namespace plotforge::data {

struct Annotations {
  std::optional<std::vector<aux::Cluster>> coref_clusters;
  std::optional<std::vector<aux::Label>> discourse_labels;
};

struct CorpusRecord {
  std::string prompt;
  std::string story;
  Annotations annotations;
  std::size_t line = 0;
};

struct ReadReport {
  std::size_t skipped = 0;
  std::vector<std::string> messages;  // "path:line: reason" per skipped line
};

// Throws ValidationError "path:line: reason" on the first malformed record
// unless lenient, in which case the record is skipped and reported.
std::vector<CorpusRecord> read_corpus(const std::string& path, bool lenient = false, ReadReport* report = nullptr);

void write_triples(const std::string& path, const std::vector<outline::StoryTriple>& triples);
std::vector<outline::StoryTriple> read_triples(const std::string& path);

void write_sidecar(const std::string& path, const std::vector<Annotations>& annotations);
std::vector<Annotations> read_sidecar(const std::string& path);

void write_pairs(const std::string& path, const std::vector<aux::MarkerPair>& pairs);
std::vector<aux::MarkerPair> read_pairs(const std::string& path);

// One string per non-empty line, e.g. a file of generated stories. Lines that
// parse as JSON objects with a "story" field contribute that field instead.
std::vector<std::string> read_story_lines(const std::string& path);

}  // namespace plotforge::data
