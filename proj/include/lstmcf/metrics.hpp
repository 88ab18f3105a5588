#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lstmcf/dataset.hpp"

namespace lstmcf {

// counts[truth][pred] over non-ignored pixels.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return n_[truth * k_ + pred]; }
  std::uint64_t ignored() const { return ignored_; }
  std::uint64_t total() const;
  // t_i = sum_j n_ij
  std::uint64_t truth_count(std::size_t i) const;
  std::uint64_t predicted_count(std::size_t j) const;

  // Ignore is decided by the truth map. A prediction outside [0, k) on a
  // counted pixel is rejected.
  void accumulate(const LabelMap& predicted, const LabelMap& truth);
  void add(std::size_t truth, std::size_t pred, std::uint64_t count = 1);
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> n_;
  std::uint64_t ignored_ = 0;
};

struct JaccardScores {
  // nullopt when t_i = 0
  std::vector<std::optional<double>> paper;  // n_ii / t_i
  std::vector<std::optional<double>> iou;    // n_ii / (t_i + p_i - n_ii)
  double mean_paper = 0.0;  // over defined classes only
  double mean_iou = 0.0;
  std::size_t defined = 0;
  double pixel_accuracy = 0.0;
};

JaccardScores class_jaccard(const ConfusionMatrix& cm);

// Human-readable table plus row-normalized confusion matrix.
std::string format_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
// `class_index\tname\tpaper_jaccard\tiou\tt_i`, "undefined" for t_i = 0.
std::string format_report_tsv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
// Writes report.txt and report.tsv into dir.
void write_report(const std::filesystem::path& dir, const ConfusionMatrix& cm,
                  const std::vector<std::string>& class_names);

}  // namespace lstmcf
