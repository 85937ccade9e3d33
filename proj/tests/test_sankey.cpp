#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sinkflow/dataio.hpp"
#include "sinkflow/sankey.hpp"

using namespace sinkflow;

namespace {

SankeyDocument truth_document(int steps, uint64_t seed) {
  SyntheticSpec spec;
  spec.k = 3;
  spec.N = 200;
  spec.steps = steps;
  spec.seed = seed;
  spec.kernel = Matrix(3, 3);
  for (int i = 0; i < 3; ++i) {
    spec.kernel(i, i) = 0.8;
    spec.kernel(i, (i + 1) % 3) = 0.2;
  }
  auto [marginals, plans] = build_marginals_and_plans(generate_synthetic(spec));
  SankeyDocument doc;
  doc.k = 3;
  doc.labels = default_faction_labels(3);
  doc.marginals = marginals;
  doc.flows = plans;
  doc.given_steps = static_cast<int>(marginals.size());
  return doc;
}

size_t count_substr(const std::string& s, const std::string& needle) {
  size_t n = 0;
  for (size_t pos = s.find(needle); pos != std::string::npos;
       pos = s.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace

TEST_CASE("a four-step truth series gives three flow blocks with the marker at the end") {
  SankeyDocument doc = truth_document(3, 21);
  REQUIRE(doc.marginals.size() == 4);
  REQUIRE(doc.flows.size() == 3);
  CHECK(doc.given_steps == 4);
  doc.validate();

  nlohmann::json j = doc.to_json();
  CHECK(j["k"] == 3);
  CHECK(j["given_steps"] == 4);
  CHECK(j["marginals"].size() == 4);
  CHECK(j["flows"].size() == 3);
  CHECK(j["labels"] == nlohmann::json({"F0", "F1", "F2"}));

  SankeyDocument back = SankeyDocument::from_json(j);
  CHECK(back.k == doc.k);
  CHECK(back.given_steps == doc.given_steps);
  REQUIRE(back.flows.size() == doc.flows.size());
  for (size_t t = 0; t < doc.flows.size(); ++t)
    CHECK(max_abs_diff(back.flows[t], doc.flows[t]) == 0.0);
}

TEST_CASE("mass-inconsistent documents are rejected") {
  SankeyDocument doc = truth_document(3, 22);
  SUBCASE("row sum off the marginal") {
    doc.flows[1](0, 0) += 1e-6;
    CHECK_THROWS_AS(doc.validate(), InvalidInputError);
  }
  SUBCASE("tiny drift within tolerance is accepted") {
    doc.flows[1](0, 0) += 5e-10;
    doc.validate();
  }
  SUBCASE("negative flow") {
    doc.flows[0](0, 1) = -doc.flows[0](0, 1) - 0.01;
    CHECK_THROWS_AS(doc.validate(), InvalidInputError);
  }
  SUBCASE("label count mismatch") {
    doc.labels.pop_back();
    CHECK_THROWS_AS(doc.validate(), DimensionError);
  }
  SUBCASE("flow block count mismatch") {
    doc.flows.pop_back();
    CHECK_THROWS_AS(doc.validate(), DimensionError);
  }
  SUBCASE("marker out of range") {
    doc.given_steps = 5;
    CHECK_THROWS_AS(doc.validate(), InvalidInputError);
    doc.given_steps = 0;
    CHECK_THROWS_AS(doc.validate(), InvalidInputError);
  }
  SUBCASE("empty document") {
    SankeyDocument empty;
    CHECK_THROWS_AS(empty.validate(), InvalidInputError);
  }
}

TEST_CASE("malformed JSON documents raise parse errors") {
  CHECK_THROWS_AS(SankeyDocument::from_json(nlohmann::json{{"k", 3}}), ParseError);
  nlohmann::json j = truth_document(2, 5).to_json();
  j["flows"][0] = "oops";
  CHECK_THROWS_AS(SankeyDocument::from_json(j), ParseError);
}

TEST_CASE("the SVG rendering is deterministic and self-describing") {
  SankeyDocument doc = truth_document(4, 23);
  doc.given_steps = 3;  // last two columns count as predictions
  nlohmann::json echo = {{"command", "export-sankey"}, {"note", "a--b"}};
  std::string svg = sankey_svg(doc, echo);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("config:") != std::string::npos);
  CHECK(svg.find("export-sankey") != std::string::npos);
  // Comment content must not contain "--": the echoed value is rewritten.
  CHECK(svg.find("a--b") == std::string::npos);
  CHECK(svg.find("a-=b") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(sankey_svg(doc, echo) == svg);

  // One ribbon per positive flow entry.
  size_t positive = 0;
  for (const Matrix& f : doc.flows)
    for (size_t i = 0; i < f.size(); ++i)
      if (f.data()[i] > 0.0) ++positive;
  CHECK(count_substr(svg, "<path") == positive);

  SUBCASE("no marker when everything is given") {
    doc.given_steps = 5;
    std::string plain = sankey_svg(doc, nullptr);
    CHECK(plain.find("stroke-dasharray") == std::string::npos);
    CHECK(plain.find("config:") == std::string::npos);
  }
}
