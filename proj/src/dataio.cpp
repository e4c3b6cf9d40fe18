#include "scapt/dataio.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "scapt/errors.hpp"
#include "scapt/text.hpp"

namespace scapt {

namespace {

using nlohmann::json;

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ContractError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

Span read_span(const json& j) {
  const auto from = j.at("from").get<std::size_t>();
  const auto to = j.at("to").get<std::size_t>();
  return {from, to};
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<LabeledSentence> read_pretrain_corpus(const std::filesystem::path& path) {
  std::vector<LabeledSentence> out;
  for_each_record(path, [&](const json& j) {
    LabeledSentence s;
    s.tokens = tokenize(j.at("text").get<std::string>());
    const auto label = j.at("label").get<std::string>();
    if (label == "positive") {
      s.label = Polarity::Positive;
    } else if (label == "negative") {
      s.label = Polarity::Negative;
    } else {
      throw ParseError("label must be positive or negative, got '" + label + "'");
    }
    for (const auto& a : j.at("aspects")) s.aspects.push_back(read_span(a));
    s.validate();
    out.push_back(std::move(s));
  });
  return out;
}

std::string pretrain_record(const RetrievedSentence& s) {
  json aspects = json::array();
  for (const auto& a : s.aspects) aspects.push_back({{"from", a.start}, {"to", a.end}});
  return json{{"text", s.text},
              {"label", std::string(to_string(s.label))},
              {"aspects", aspects},
              {"review_id", s.review_id}}
      .dump();
}

void write_pretrain_corpus(const std::filesystem::path& path,
                           std::span<const RetrievedSentence> sentences) {
  auto out = open_out(path);
  for (const auto& s : sentences) out << pretrain_record(s) << '\n';
}

std::vector<AbsaSentence> read_absa(const std::filesystem::path& path) {
  std::vector<AbsaSentence> out;
  for_each_record(path, [&](const json& j) {
    AbsaSentence s;
    s.text = j.at("text").get<std::string>();
    s.id = j.contains("id") ? j.at("id").get<std::string>() : std::to_string(out.size());
    s.tokens = tokenize(s.text);
    for (const auto& a : j.at("aspects")) {
      AspectAnnotation ann;
      ann.term = a.value("term", "");
      ann.span = read_span(a);
      const auto pol = a.at("polarity").get<std::string>();
      auto p = parse_polarity(pol);
      if (!p) throw ParseError("unknown polarity '" + pol + "'");
      ann.polarity = *p;
      if (a.contains("opinion_terms"))
        for (const auto& o : a.at("opinion_terms")) ann.opinions.push_back(read_span(o));
      s.aspects.push_back(std::move(ann));
    }
    s.validate();
    out.push_back(std::move(s));
  });
  return out;
}

void write_absa(const std::filesystem::path& path, std::span<const AbsaSentence> data) {
  auto out = open_out(path);
  for (const auto& s : data) {
    json aspects = json::array();
    for (const auto& a : s.aspects) {
      json ops = json::array();
      for (const auto& o : a.opinions) ops.push_back({{"from", o.start}, {"to", o.end}});
      aspects.push_back({{"term", a.term},
                         {"from", a.span.start},
                         {"to", a.span.end},
                         {"polarity", std::string(to_string(a.polarity))},
                         {"opinion_terms", ops}});
    }
    out << json{{"id", s.id}, {"text", s.text}, {"aspects", aspects}}.dump() << '\n';
  }
}

std::vector<RawReview> read_reviews(const std::filesystem::path& path) {
  std::vector<RawReview> out;
  for_each_record(path, [&](const json& j) {
    RawReview r;
    r.review_id = j.at("review_id").is_string() ? j.at("review_id").get<std::string>()
                                                : j.at("review_id").dump();
    r.text = j.at("text").get<std::string>();
    const auto& stars = j.at("stars");
    if (!stars.is_number_integer() && !(stars.is_number_float() &&
                                        stars.get<double>() == static_cast<int>(stars.get<double>())))
      throw ParseError("stars must be an integer");
    r.stars = static_cast<int>(stars.get<double>());
    if (r.stars < 1 || r.stars > 5) throw ParseError("stars must be in 1..5");
    if (j.contains("topics") && !j.at("topics").is_null())
      r.topics = j.at("topics").get<std::vector<std::string>>();
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace scapt
