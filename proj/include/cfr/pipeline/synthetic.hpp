#pragma once

#include "cfr/backends/toy.hpp"
#include "cfr/backends/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cfr {

// Desk-scale dataset with a planted spurious correlation: each class is shown
// on its own typical background `bias` of the time. The object itself is a
// faint mask, so a classifier trained on this data leans on the background.
struct SyntheticOptions {
  std::vector<std::string> target_classes = {"dog sled", "howler monkey", "seat belt", "ski"};
  int per_class = 50;           // T, the set to stress-test
  int test_per_class = 25;      // held-out in-distribution set
  int ood_per_class = 25;       // atypical backgrounds only
  int pretrain_per_class = 40;  // every universe class, for the baseline head
  double bias = 0.9;
  double object_contrast = 0.04;
  double noise = 0.08;
  double color_jitter = 0.05;
  double feature_scale = 40.0;
  int pretrain_epochs = 400;
  double pretrain_lr = 2.0;  // in units of 1 / mean squared feature norm
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::filesystem::path root;
  std::filesystem::path T;
  std::filesystem::path test;
  std::filesystem::path ood;
  std::filesystem::path hybrid;
  std::filesystem::path params;
  std::filesystem::path config;
};

const std::string& typical_background(const std::string& class_name);

ImageTensor synthesize_image(const std::string& id, const std::string& class_name, const std::string& background,
                             const SyntheticOptions& options, std::uint64_t seed);

// Trains the head of a fresh toy classifier on universe-wide biased data.
toy::ToyClassifier pretrain_baseline(const SyntheticOptions& options);

// Writes images/, T.jsonl, test.jsonl, ood.jsonl, hybrid.jsonl, baseline/ and
// a ready-to-run synthetic.ini under out_dir.
SyntheticDataset generate_synthetic(const std::filesystem::path& out_dir, const SyntheticOptions& options);

}  // namespace cfr
