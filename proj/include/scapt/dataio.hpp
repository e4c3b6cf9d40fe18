#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "scapt/corpus.hpp"
#include "scapt/finetune.hpp"
#include "scapt/pretrain.hpp"

namespace scapt {

// JSONL readers. Every malformed record raises ParseError("<file>:<line>: ...").

/// {"text": str, "label": "positive"|"negative", "aspects": [{"from", "to"}]}
std::vector<LabeledSentence> read_pretrain_corpus(const std::filesystem::path& path);
void write_pretrain_corpus(const std::filesystem::path& path,
                           std::span<const RetrievedSentence> sentences);
std::string pretrain_record(const RetrievedSentence& s);

/// {"text": str, "aspects": [{"term", "from", "to", "polarity", "opinion_terms": [{"from", "to"}]}]}
std::vector<AbsaSentence> read_absa(const std::filesystem::path& path);
void write_absa(const std::filesystem::path& path, std::span<const AbsaSentence> data);

/// {"review_id": str, "text": str, "stars": int, "topics": [str]}
std::vector<RawReview> read_reviews(const std::filesystem::path& path);

}  // namespace scapt
