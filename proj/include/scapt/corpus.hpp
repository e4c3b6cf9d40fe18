#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "scapt/finetune.hpp"
#include "scapt/pretrain.hpp"
#include "scapt/types.hpp"

namespace scapt {

/// A document-level review as found in a public rating dump, projected to
/// {"review_id", "text", "stars", "topics": [...]}.
struct RawReview {
  std::string review_id;
  std::string text;
  int stars = 0;
  std::optional<std::vector<std::string>> topics;
};

struct RatedReview {
  const RawReview* review = nullptr;
  Polarity label = Polarity::Positive;
};

/// 5 stars -> positive, 1 star -> negative, anything else -> dropped.
std::optional<Polarity> rating_label(int stars);

std::vector<RatedReview> filter_by_rating(std::span<const RawReview> reviews);

struct DomainFilterResult {
  std::vector<RatedReview> kept;
  std::size_t missing_topic = 0;
};

/// Keeps reviews with at least one topic in `allowed` (case-insensitive).
/// Reviews without a topic field are skipped and counted.
DomainFilterResult filter_by_domain(std::span<const RatedReview> reviews,
                                    const std::set<std::string>& allowed);

/// Splits after a run of '.', '!' or '?' that is followed by whitespace or
/// the end of text. Abbreviations are not special-cased. Sentences are
/// trimmed; empty ones are dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Tokenized aspect terms harvested from an ABSA training split.
class AspectLexicon {
 public:
  AspectLexicon() = default;
  void add(std::vector<std::string> term);
  static AspectLexicon from_terms(std::span<const std::string> terms);
  static AspectLexicon from_training(std::span<const AbsaSentence> train);

  bool contains(std::span<const std::string> tokens) const;
  std::size_t longest() const { return longest_; }
  std::size_t size() const { return terms_.size(); }

 private:
  std::set<std::vector<std::string>> terms_;
  std::size_t longest_ = 0;
};

/// Left-to-right, longest-match-first, non-overlapping exact token matches.
std::vector<Span> match_aspects(std::span<const std::string> tokens, const AspectLexicon& lexicon);

struct RetrievedSentence {
  std::string text;
  std::vector<std::string> tokens;
  Polarity label = Polarity::Positive;
  std::vector<Span> aspects;
  std::string review_id;
};

struct CorpusStats {
  std::size_t ingested = 0;
  std::size_t rating_kept = 0;
  std::size_t domain_kept = 0;
  std::size_t missing_topic = 0;
  std::size_t sentences = 0;
  std::size_t matched = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  nlohmann::json to_json() const;
  bool operator==(const CorpusStats&) const = default;
};

struct CorpusBuild {
  std::vector<RetrievedSentence> sentences;
  CorpusStats stats;
};

/// Rating filter, domain filter, sentence split, aspect matching.
CorpusBuild build_corpus(std::span<const RawReview> reviews, const AspectLexicon& lexicon,
                         const std::set<std::string>& allowed_topics);

/// File-level pipeline: reads review JSONL and the ABSA training JSONL,
/// writes the corpus JSONL to `out_path` and stats to `<out_path>.stats.json`.
CorpusStats build_pretrain_corpus(const std::filesystem::path& reviews_path,
                                  const std::filesystem::path& absa_train_path,
                                  const std::set<std::string>& allowed_topics,
                                  const std::filesystem::path& out_path);

enum class SliceTag { ESE, ISE };
std::string_view to_string(SliceTag t);

struct SliceReport {
  std::vector<SliceTag> tags;
  std::size_t ese = 0;
  std::size_t ise = 0;

  double ise_fraction() const;
  double ese_fraction() const;
};

/// ISE when the aspect has no annotated opinion term, ESE otherwise.
SliceReport slice_ese_ise(std::span<const AspectExample> examples);

}  // namespace scapt
