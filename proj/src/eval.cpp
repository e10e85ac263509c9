#include "mts/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <string>

#include "mts/errors.hpp"

namespace mts::eval {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string InferenceRule::to_string() const {
  switch (kind) {
    case Kind::extended_argmax: return "extended_argmax";
    case Kind::max_prob_threshold: return "max_prob_threshold " + format_double(threshold);
    case Kind::similarity_threshold: return "similarity_threshold " + format_double(threshold);
  }
  return "?";
}

InferenceRule InferenceRule::parse(std::string_view text) {
  InferenceRule r;
  const auto space = text.find(' ');
  const std::string_view name = text.substr(0, space);
  if (name == "extended_argmax" && space == std::string_view::npos) return r;
  if (name == "max_prob_threshold") {
    r.kind = Kind::max_prob_threshold;
  } else if (name == "similarity_threshold") {
    r.kind = Kind::similarity_threshold;
  } else {
    throw ContractError("unknown inference rule '" + std::string(text) + "'");
  }
  if (space == std::string_view::npos) throw ContractError("inference rule needs a threshold");
  const std::string_view num = text.substr(space + 1);
  const auto res = std::from_chars(num.data(), num.data() + num.size(), r.threshold);
  if (res.ec != std::errc() || res.ptr != num.data() + num.size()) {
    throw ContractError("bad inference threshold '" + std::string(num) + "'");
  }
  return r;
}

int argmax_label(std::span<const double> probabilities) {
  if (probabilities.empty()) throw ContractError("argmax_label: empty input");
  return static_cast<int>(std::max_element(probabilities.begin(), probabilities.end()) -
                          probabilities.begin()) + 1;
}

std::vector<int> predict(const nn::NetworkBundle& net, const Matrix& x, const InferenceRule& rule) {
  const std::size_t k = net.architecture().classes;
  const Matrix features = net.forward_features(nn::Extractor::f2, x);
  const Matrix probs = net.head_forward(nn::Head::y2, features);
  Matrix similarity;
  if (rule.kind == InferenceRule::Kind::similarity_threshold) {
    similarity = net.head_forward(nn::Head::c, features);
  }

  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = probs.row(i);
    switch (rule.kind) {
      case InferenceRule::Kind::extended_argmax:
        out[i] = argmax_label(row);
        break;
      case InferenceRule::Kind::max_prob_threshold: {
        const auto known = row.first(k);
        const int best = argmax_label(known);
        out[i] = known[static_cast<std::size_t>(best - 1)] > rule.threshold ? best : static_cast<int>(k) + 1;
        break;
      }
      case InferenceRule::Kind::similarity_threshold: {
        const auto s = similarity.row(i);
        const double w = *std::max_element(s.begin(), s.end());
        out[i] = w > rule.threshold ? argmax_label(row.first(k)) : static_cast<int>(k) + 1;
        break;
      }
    }
  }
  return out;
}

int predict(const nn::NetworkBundle& net, std::span<const double> x, const InferenceRule& rule) {
  return predict(net, Matrix::row_vector(x), rule).front();
}

EvalReport metrics(std::span<const int> predictions, std::span<const int> truth, std::size_t classes) {
  if (predictions.size() != truth.size()) {
    throw DimensionError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
  }
  if (classes < 1) throw ContractError("metrics: K must be >= 1");
  const std::size_t width = classes + 1;
  EvalReport r;
  r.classes = classes;
  r.confusion = Matrix(width, width);
  r.n_evaluated = truth.size();
  auto check = [width](int label, const char* what) {
    if (label < 1 || static_cast<std::size_t>(label) > width) {
      throw DataError(std::string("metrics: ") + what + " label " + std::to_string(label) +
                      " outside 1.." + std::to_string(width));
    }
  };
  for (std::size_t i = 0; i < truth.size(); ++i) {
    check(truth[i], "true");
    check(predictions[i], "predicted");
    r.confusion(static_cast<std::size_t>(truth[i] - 1), static_cast<std::size_t>(predictions[i] - 1)) += 1.0;
  }

  r.per_class_acc.resize(width);
  for (std::size_t c = 0; c < width; ++c) {
    double total = 0.0;
    for (double v : r.confusion.row(c)) total += v;
    if (total == 0.0) throw DataError("metrics: class " + std::to_string(c + 1) + " absent from true labels");
    r.per_class_acc[c] = r.confusion(c, c) / total;
  }
  double known = 0.0;
  for (std::size_t c = 0; c < classes; ++c) known += r.per_class_acc[c];
  r.unk = r.per_class_acc[classes];
  r.os_star = known / static_cast<double>(classes);
  r.os = (known + r.unk) / static_cast<double>(width);
  return r;
}

double discriminator_confusion(const nn::NetworkBundle& net, const Matrix& source_known,
                               const Matrix& target_known) {
  const std::size_t total = source_known.rows() + target_known.rows();
  if (total == 0) throw DataError("discriminator_confusion: no samples");
  std::size_t correct = 0;
  auto count = [&](const Matrix& x, bool is_source) {
    if (x.rows() == 0) return;
    const Matrix p = net.head_forward(nn::Head::d, net.forward_features(nn::Extractor::f2, x));
    for (std::size_t i = 0; i < p.rows(); ++i) {
      if ((p(i, 0) > 0.5) == is_source) ++correct;
    }
  };
  count(source_known, true);
  count(target_known, false);
  return static_cast<double>(correct) / static_cast<double>(total);
}

EvalReport evaluate(const nn::NetworkBundle& net, const data::Dataset& target, const InferenceRule& rule) {
  const auto pred = predict(net, target.features, rule);
  return metrics(pred, target.labels, net.architecture().classes);
}

void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "metric,value\n";
  out << "os," << format_double(r.os) << '\n';
  out << "os_star," << format_double(r.os_star) << '\n';
  out << "unk," << format_double(r.unk) << '\n';
  for (std::size_t c = 0; c < r.per_class_acc.size(); ++c) {
    out << "acc_class_" << (c + 1) << ',' << format_double(r.per_class_acc[c]) << '\n';
  }
  out << "n_evaluated," << r.n_evaluated << '\n';
}

void write_report_table(std::ostream& out, const EvalReport& r) {
  char line[96];
  out << "metric        value\n";
  out << "------------  --------\n";
  auto row = [&](const std::string& name, double v) {
    std::snprintf(line, sizeof(line), "%-12s  %8.4f\n", name.c_str(), v);
    out << line;
  };
  row("OS", r.os);
  row("OS*", r.os_star);
  row("Unk", r.unk);
  for (std::size_t c = 0; c < r.per_class_acc.size(); ++c) {
    row(c < r.classes ? "class " + std::to_string(c + 1) : "unknown", r.per_class_acc[c]);
  }
  out << "samples       " << r.n_evaluated << '\n';
}

}  // namespace mts::eval
