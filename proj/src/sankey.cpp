#include "sinkflow/sankey.hpp"

#include <cmath>
#include <cstdio>

#include "sinkflow/jsonio.hpp"

namespace sinkflow {

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
                          "#76b7b2", "#edc948", "#ff9da7", "#9c755f", "#bab0ac"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// XML comments must not contain "--"; break any run of dashes apart.
std::string comment_safe(std::string s) {
  for (size_t i = 1; i < s.size(); ++i)
    if (s[i] == '-' && s[i - 1] == '-') s[i] = '=';
  return s;
}

}  // namespace

std::vector<std::string> default_faction_labels(int k) {
  std::vector<std::string> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.push_back("F" + std::to_string(i));
  return out;
}

void SankeyDocument::validate() const {
  if (k < 1) throw InvalidInputError("sankey: need k >= 1");
  if (static_cast<int>(labels.size()) != k)
    throw DimensionError("sankey: " + std::to_string(labels.size()) +
                         " labels for k = " + std::to_string(k));
  if (marginals.empty()) throw InvalidInputError("sankey: no steps");
  if (flows.size() + 1 != marginals.size())
    throw DimensionError("sankey: " + std::to_string(flows.size()) + " flow blocks for " +
                         std::to_string(marginals.size()) + " steps (need steps - 1)");
  if (given_steps < 1 || given_steps > static_cast<int>(marginals.size()))
    throw InvalidInputError("sankey: given_steps " + std::to_string(given_steps) +
                            " outside [1, " + std::to_string(marginals.size()) + "]");
  for (size_t t = 0; t < marginals.size(); ++t) {
    if (static_cast<int>(marginals[t].size()) != k)
      throw DimensionError("sankey: step " + std::to_string(t) +
                           " marginal length does not match k");
    for (double v : marginals[t])
      if (!std::isfinite(v) || v < 0.0)
        throw InvalidInputError("sankey: step " + std::to_string(t) +
                                " has a negative or non-finite mass");
  }
  for (size_t t = 0; t < flows.size(); ++t) {
    if (flows[t].rows() != k || flows[t].cols() != k)
      throw DimensionError("sankey: flow block " + std::to_string(t) +
                           " is not k x k");
    for (int i = 0; i < k; ++i) {
      double row = 0.0;
      for (int j = 0; j < k; ++j) {
        double v = flows[t](i, j);
        if (!std::isfinite(v) || v < 0.0)
          throw InvalidInputError("sankey: flow block " + std::to_string(t) +
                                  " has a negative or non-finite entry");
        row += v;
      }
      if (std::abs(row - marginals[t][i]) > 1e-9)
        throw InvalidInputError("sankey: flow block " + std::to_string(t) + " row " +
                                std::to_string(i) + " sums to " + std::to_string(row) +
                                " but the step's marginal is " +
                                std::to_string(marginals[t][i]));
    }
  }
}

nlohmann::json SankeyDocument::to_json() const {
  validate();
  nlohmann::json j;
  j["k"] = k;
  j["labels"] = labels;
  j["given_steps"] = given_steps;
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : marginals) ms.push_back(m);
  j["marginals"] = std::move(ms);
  nlohmann::json fs = nlohmann::json::array();
  for (const Matrix& f : flows) {
    nlohmann::json block = nlohmann::json::array();
    for (int i = 0; i < k; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < k; ++c) row.push_back(f(i, c));
      block.push_back(std::move(row));
    }
    fs.push_back(std::move(block));
  }
  j["flows"] = std::move(fs);
  return j;
}

SankeyDocument SankeyDocument::from_json(const nlohmann::json& j) {
  try {
    SankeyDocument doc;
    doc.k = j.at("k").get<int>();
    doc.labels = j.at("labels").get<std::vector<std::string>>();
    doc.given_steps = j.at("given_steps").get<int>();
    for (const auto& m : j.at("marginals"))
      doc.marginals.push_back(m.get<std::vector<double>>());
    for (const auto& block : j.at("flows")) {
      if (!block.is_array() || block.empty())
        throw ParseError("sankey: flow block must be an array of rows");
      Matrix f(static_cast<int>(block.size()), static_cast<int>(block[0].size()));
      for (int i = 0; i < f.rows(); ++i) {
        if (static_cast<int>(block[i].size()) != f.cols())
          throw ParseError("sankey: ragged flow block");
        for (int c = 0; c < f.cols(); ++c) f(i, c) = block[i][c].get<double>();
      }
      doc.flows.push_back(std::move(f));
    }
    doc.validate();
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("sankey: malformed document: ") + e.what());
  }
}

std::string sankey_svg(const SankeyDocument& doc, const nlohmann::json& config_echo) {
  doc.validate();
  const int n = static_cast<int>(doc.marginals.size());
  const double node_w = 16.0, col_gap = 110.0, height = 320.0, pad = 8.0;
  const double top = 40.0, left = 40.0;
  const double width = left * 2 + node_w + (n - 1) * col_gap;

  // Column geometry: stacked nodes, heights proportional to mass.
  std::vector<std::vector<double>> y0(n, std::vector<double>(doc.k)),
      y1(n, std::vector<double>(doc.k));
  for (int t = 0; t < n; ++t) {
    double y = top;
    for (int i = 0; i < doc.k; ++i) {
      y0[t][i] = y;
      y1[t][i] = y + doc.marginals[t][i] * height;
      y = y1[t][i] + pad;
    }
  }

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
         "\" height=\"" + fmt(top + height + doc.k * pad + 60.0) + "\">\n";
  if (!config_echo.is_null())
    svg += "<!-- config: " + comment_safe(config_echo.dump()) + " -->\n";

  // Ribbons first so nodes draw over their ends.
  for (int t = 0; t + 1 < n; ++t) {
    const double xs = left + t * col_gap + node_w;
    const double xt = left + (t + 1) * col_gap;
    const double xm = 0.5 * (xs + xt);
    std::vector<double> src_off(doc.k, 0.0), dst_off(doc.k, 0.0);
    for (int i = 0; i < doc.k; ++i)
      for (int j = 0; j < doc.k; ++j) {
        const double mass = doc.flows[t](i, j);
        if (mass <= 0.0) continue;
        const double h = mass * height;
        const double sy = y0[t][i] + src_off[i];
        const double ty = y0[t + 1][j] + dst_off[j];
        src_off[i] += h;
        dst_off[j] += h;
        svg += "<path d=\"M" + fmt(xs) + "," + fmt(sy) + " C" + fmt(xm) + "," + fmt(sy) +
               " " + fmt(xm) + "," + fmt(ty) + " " + fmt(xt) + "," + fmt(ty) + " L" +
               fmt(xt) + "," + fmt(ty + h) + " C" + fmt(xm) + "," + fmt(ty + h) + " " +
               fmt(xm) + "," + fmt(sy + h) + " " + fmt(xs) + "," + fmt(sy + h) +
               " Z\" fill=\"" + kPalette[i % 10] + "\" opacity=\"0.45\"/>\n";
      }
  }
  for (int t = 0; t < n; ++t) {
    const double x = left + t * col_gap;
    for (int i = 0; i < doc.k; ++i) {
      svg += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y0[t][i]) + "\" width=\"" +
             fmt(node_w) + "\" height=\"" + fmt(std::max(0.5, y1[t][i] - y0[t][i])) +
             "\" fill=\"" + kPalette[i % 10] + "\"/>\n";
      if (t == 0)
        svg += "<text x=\"" + fmt(x - 6.0) + "\" y=\"" +
               fmt(0.5 * (y0[t][i] + y1[t][i]) + 4.0) +
               "\" font-size=\"11\" text-anchor=\"end\">" + doc.labels[i] + "</text>\n";
    }
    svg += "<text x=\"" + fmt(x + node_w / 2) + "\" y=\"" + fmt(top - 14.0) +
           "\" font-size=\"11\" text-anchor=\"middle\">t" + std::to_string(t) +
           "</text>\n";
  }
  if (doc.given_steps < n) {
    const double x = left + (doc.given_steps - 1) * col_gap + node_w + col_gap / 2;
    svg += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(top - 20.0) + "\" x2=\"" + fmt(x) +
           "\" y2=\"" + fmt(top + height + doc.k * pad + 10.0) +
           "\" stroke=\"#d62728\" stroke-dasharray=\"6,4\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace sinkflow
