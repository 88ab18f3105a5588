#include "lstmcf/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "lstmcf/error.hpp"

namespace lstmcf {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), n_(num_classes * num_classes, 0) {}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto v : n_) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::truth_count(std::size_t i) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < k_; ++j) t += at(i, j);
  return t;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t j) const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, j);
  return t;
}

void ConfusionMatrix::accumulate(const LabelMap& predicted, const LabelMap& truth) {
  if (predicted.width != truth.width || predicted.height != truth.height)
    throw ShapeError("confusion: prediction " + std::to_string(predicted.width) + "x" +
                     std::to_string(predicted.height) + " vs truth " + std::to_string(truth.width) + "x" +
                     std::to_string(truth.height));
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const std::uint8_t t = truth.labels[i], p = predicted.labels[i];
    if (t == kIgnoreLabel) {
      ++ignored_;
      continue;
    }
    if (t >= k_) throw ShapeError("confusion: truth label " + std::to_string(t) + " outside " + std::to_string(k_) + " classes");
    if (p >= k_) throw ShapeError("confusion: predicted label " + std::to_string(p) + " outside " + std::to_string(k_) + " classes");
    ++n_[t * k_ + p];
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t count) {
  if (truth >= k_ || pred >= k_) throw ShapeError("confusion: class index out of range");
  n_[truth * k_ + pred] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("confusion: merging matrices with different class counts");
  for (std::size_t i = 0; i < n_.size(); ++i) n_[i] += other.n_[i];
  ignored_ += other.ignored_;
}

JaccardScores class_jaccard(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  JaccardScores s;
  s.paper.resize(k);
  s.iou.resize(k);
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t nii = cm.at(i, i), ti = cm.truth_count(i);
    diag += nii;
    if (ti == 0) continue;
    const double p = static_cast<double>(nii) / static_cast<double>(ti);
    const double u = static_cast<double>(nii) / static_cast<double>(ti + cm.predicted_count(i) - nii);
    s.paper[i] = p;
    s.iou[i] = u;
    s.mean_paper += p;
    s.mean_iou += u;
    ++s.defined;
  }
  if (s.defined) {
    s.mean_paper /= static_cast<double>(s.defined);
    s.mean_iou /= static_cast<double>(s.defined);
  }
  if (const auto t = cm.total()) s.pixel_accuracy = static_cast<double>(diag) / static_cast<double>(t);
  return s;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

void check_names(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  if (names.size() != cm.num_classes())
    throw ShapeError("report: " + std::to_string(names.size()) + " class names for " +
                     std::to_string(cm.num_classes()) + " classes");
}

}  // namespace

std::string format_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  check_names(cm, class_names);
  const auto s = class_jaccard(cm);
  const std::size_t k = cm.num_classes();
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  if (s.defined == 0) os << "warning: no labeled pixels; every class is undefined\n";
  os << std::left << std::setw(4) << "id" << std::setw(14) << "class" << std::right << std::setw(10) << "jaccard"
     << std::setw(10) << "iou" << std::setw(12) << "pixels" << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    os << std::left << std::setw(4) << i << std::setw(14) << class_names[i] << std::right;
    if (s.paper[i])
      os << std::setw(10) << *s.paper[i] << std::setw(10) << *s.iou[i];
    else
      os << std::setw(10) << "-" << std::setw(10) << "-";
    os << std::setw(12) << cm.truth_count(i) << '\n';
  }
  os << "mean jaccard (n_ii/t_i) " << s.mean_paper << " over " << s.defined << " classes\n";
  os << "mean iou                " << s.mean_iou << '\n';
  os << "pixel accuracy          " << s.pixel_accuracy << '\n';
  os << "ignored pixels          " << cm.ignored() << "\n\nrow-normalized confusion (truth rows, predicted columns)\n";
  for (std::size_t i = 0; i < k; ++i) {
    os << std::left << std::setw(14) << class_names[i] << std::right;
    const auto t = cm.truth_count(i);
    for (std::size_t j = 0; j < k; ++j) {
      if (t == 0)
        os << std::setw(8) << "-";
      else
        os << std::setw(8) << static_cast<double>(cm.at(i, j)) / static_cast<double>(t);
    }
    os << '\n';
  }
  return os.str();
}

std::string format_report_tsv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  check_names(cm, class_names);
  const auto s = class_jaccard(cm);
  std::ostringstream os;
  for (std::size_t i = 0; i < cm.num_classes(); ++i)
    os << i << '\t' << class_names[i] << '\t' << fmt(s.paper[i]) << '\t' << fmt(s.iou[i]) << '\t'
       << cm.truth_count(i) << '\n';
  return os.str();
}

void write_report(const std::filesystem::path& dir, const ConfusionMatrix& cm,
                  const std::vector<std::string>& class_names) {
  std::filesystem::create_directories(dir);
  std::ofstream txt(dir / "report.txt"), tsv(dir / "report.tsv");
  if (!txt || !tsv) throw FormatError("cannot write report into " + dir.string());
  txt << format_report(cm, class_names);
  tsv << format_report_tsv(cm, class_names);
}

}  // namespace lstmcf
