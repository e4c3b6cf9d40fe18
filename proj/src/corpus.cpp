#include "scapt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "scapt/dataio.hpp"
#include "scapt/errors.hpp"
#include "scapt/text.hpp"

namespace scapt {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<Polarity> rating_label(int stars) {
  if (stars == 5) return Polarity::Positive;
  if (stars == 1) return Polarity::Negative;
  return std::nullopt;
}

std::vector<RatedReview> filter_by_rating(std::span<const RawReview> reviews) {
  std::vector<RatedReview> out;
  for (const auto& r : reviews)
    if (auto label = rating_label(r.stars)) out.push_back({&r, *label});
  return out;
}

DomainFilterResult filter_by_domain(std::span<const RatedReview> reviews,
                                    const std::set<std::string>& allowed) {
  std::set<std::string> allowed_lower;
  for (const auto& t : allowed) allowed_lower.insert(lower(t));
  DomainFilterResult out;
  for (const auto& r : reviews) {
    if (!r.review->topics) {
      ++out.missing_topic;
      continue;
    }
    const auto& topics = *r.review->topics;
    if (std::any_of(topics.begin(), topics.end(),
                    [&](const std::string& t) { return allowed_lower.contains(lower(t)); }))
      out.kept.push_back(r);
  }
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t begin = 0, i = 0;
  auto emit = [&](std::size_t end) {
    auto s = trim(text.substr(begin, end - begin));
    if (!s.empty()) out.emplace_back(s);
    begin = end;
  };
  while (i < text.size()) {
    if (!is_terminator(text[i])) {
      ++i;
      continue;
    }
    while (i < text.size() && is_terminator(text[i])) ++i;
    if (i == text.size() || std::isspace(static_cast<unsigned char>(text[i]))) emit(i);
  }
  emit(text.size());
  return out;
}

void AspectLexicon::add(std::vector<std::string> term) {
  if (term.empty()) return;
  longest_ = std::max(longest_, term.size());
  terms_.insert(std::move(term));
}

AspectLexicon AspectLexicon::from_terms(std::span<const std::string> terms) {
  AspectLexicon lex;
  for (const auto& t : terms) lex.add(tokenize(t));
  return lex;
}

AspectLexicon AspectLexicon::from_training(std::span<const AbsaSentence> train) {
  AspectLexicon lex;
  for (const auto& s : train)
    for (const auto& a : s.aspects)
      lex.add({s.tokens.begin() + static_cast<std::ptrdiff_t>(a.span.start),
               s.tokens.begin() + static_cast<std::ptrdiff_t>(a.span.end)});
  return lex;
}

bool AspectLexicon::contains(std::span<const std::string> tokens) const {
  return terms_.contains(std::vector<std::string>(tokens.begin(), tokens.end()));
}

std::vector<Span> match_aspects(std::span<const std::string> tokens, const AspectLexicon& lexicon) {
  std::vector<std::string> lowered;
  lowered.reserve(tokens.size());
  for (const auto& t : tokens) lowered.push_back(lower(t));
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < lowered.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(lexicon.longest(), lowered.size() - i); len > 0; --len)
      if (lexicon.contains(std::span(lowered).subspan(i, len))) {
        matched = len;
        break;
      }
    if (matched) {
      out.push_back({i, i + matched});
      i += matched;
    } else {
      ++i;
    }
  }
  return out;
}

nlohmann::json CorpusStats::to_json() const {
  return {{"ingested", ingested},       {"rating_kept", rating_kept}, {"domain_kept", domain_kept},
          {"missing_topic", missing_topic}, {"sentences", sentences}, {"matched", matched},
          {"positive", positive},       {"negative", negative}};
}

CorpusBuild build_corpus(std::span<const RawReview> reviews, const AspectLexicon& lexicon,
                         const std::set<std::string>& allowed_topics) {
  CorpusBuild out;
  out.stats.ingested = reviews.size();
  const auto rated = filter_by_rating(reviews);
  out.stats.rating_kept = rated.size();
  const auto domain = filter_by_domain(rated, allowed_topics);
  out.stats.domain_kept = domain.kept.size();
  out.stats.missing_topic = domain.missing_topic;
  for (const auto& r : domain.kept) {
    for (auto& sentence : split_sentences(r.review->text)) {
      ++out.stats.sentences;
      auto tokens = tokenize(sentence);
      auto spans = match_aspects(tokens, lexicon);
      if (spans.empty()) continue;
      ++out.stats.matched;
      ++(r.label == Polarity::Positive ? out.stats.positive : out.stats.negative);
      out.sentences.push_back(
          {std::move(sentence), std::move(tokens), r.label, std::move(spans), r.review->review_id});
    }
  }
  return out;
}

CorpusStats build_pretrain_corpus(const std::filesystem::path& reviews_path,
                                  const std::filesystem::path& absa_train_path,
                                  const std::set<std::string>& allowed_topics,
                                  const std::filesystem::path& out_path) {
  const auto reviews = read_reviews(reviews_path);
  const auto train = read_absa(absa_train_path);
  const auto lexicon = AspectLexicon::from_training(train);
  const auto built = build_corpus(reviews, lexicon, allowed_topics);
  write_pretrain_corpus(out_path, built.sentences);
  std::ofstream stats(out_path.string() + ".stats.json");
  if (!stats) throw std::runtime_error("cannot write stats next to " + out_path.string());
  stats << built.stats.to_json().dump(2) << '\n';
  return built.stats;
}

std::string_view to_string(SliceTag t) { return t == SliceTag::ESE ? "ESE" : "ISE"; }

double SliceReport::ise_fraction() const {
  return tags.empty() ? 0.0 : static_cast<double>(ise) / static_cast<double>(tags.size());
}

double SliceReport::ese_fraction() const {
  return tags.empty() ? 0.0 : static_cast<double>(ese) / static_cast<double>(tags.size());
}

SliceReport slice_ese_ise(std::span<const AspectExample> examples) {
  SliceReport r;
  r.tags.reserve(examples.size());
  for (const auto& e : examples) {
    const SliceTag t = e.opinions.empty() ? SliceTag::ISE : SliceTag::ESE;
    r.tags.push_back(t);
    ++(t == SliceTag::ISE ? r.ise : r.ese);
  }
  return r;
}

}  // namespace scapt
