// SPDX-License-Identifier: Apache-2.0
#include <dovforge/dataset.hpp>
#include <dovforge/error.hpp>
#include <dovforge/png_io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dovforge {

namespace fs = std::filesystem;
using nlohmann::json;

LabeledDataset::LabeledDataset(std::vector<Sample> items, int num_classes,
                               std::string name)
    : items_(std::move(items)), num_classes_(num_classes),
      name_(std::move(name)) {
  if (num_classes_ < 2)
    throw ConfigError("dataset needs at least 2 classes, got " +
                      std::to_string(num_classes_));
  if (!items_.empty())
    shape_ = items_.front().image.shape();
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto &s = items_[i];
    if (s.label < 0 || s.label >= num_classes_)
      throw ConfigError("label " + std::to_string(s.label) + " at index " +
                        std::to_string(i) + " outside [0," +
                        std::to_string(num_classes_) + ")");
    require_same_shape(s.image.shape(), shape_, "dataset item");
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t> &indices,
                                      std::string name) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= items_.size())
      throw ConfigError("subset index " + std::to_string(i) +
                        " out of range");
    out.push_back(items_[i]);
  }
  LabeledDataset ds(std::move(out), num_classes_, std::move(name));
  ds.shape_ = shape_;
  return ds;
}

LabeledDataset LabeledDataset::without(const std::vector<std::size_t> &indices,
                                       std::string name) const {
  std::vector<bool> drop(items_.size(), false);
  for (std::size_t i : indices)
    if (i < items_.size())
      drop[i] = true;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (!drop[i])
      keep.push_back(i);
  return subset(keep, std::move(name));
}

DatasetSplit split_dataset(const LabeledDataset &ds, double fraction,
                           RngSeed seed) {
  if (ds.empty())
    throw EmptyInputError("split_dataset: empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must be in (0,1)");

  const std::size_t n = ds.size();
  const auto k = static_cast<std::size_t>(std::floor(fraction * n));
  Rng rng(seed);
  auto perm = rng.permutation(n);

  DatasetSplit out;
  out.first_indices.assign(perm.begin(), perm.begin() + k);
  out.second_indices.assign(perm.begin() + k, perm.end());
  std::sort(out.first_indices.begin(), out.first_indices.end());
  std::sort(out.second_indices.begin(), out.second_indices.end());
  out.first = ds.subset(out.first_indices, ds.name() + "/a");
  out.second = ds.subset(out.second_indices, ds.name() + "/b");
  return out;
}

void save_dataset(const LabeledDataset &ds, const fs::path &dir) {
  fs::create_directories(dir);
  std::ofstream index(dir / "index.csv");
  if (!index)
    throw IoError("cannot write " + (dir / "index.csv").string());
  index << "path,label\n";
  char name[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png(ds[i].image, dir / name);
    index << name << ',' << ds[i].label << '\n';
  }

  const Shape s = ds.image_shape();
  json meta = {{"num_classes", ds.num_classes()},
               {"channels", s.channels},
               {"height", s.height},
               {"width", s.width},
               {"name", ds.name()}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

LabeledDataset load_dataset(const fs::path &dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in)
    throw IoError("missing " + (dir / "meta.json").string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception &e) {
    throw IoError("bad meta.json in " + dir.string() + ": " + e.what());
  }
  const Shape expect{meta.at("channels").get<int>(),
                     meta.at("height").get<int>(), meta.at("width").get<int>()};

  std::ifstream index(dir / "index.csv");
  if (!index)
    throw IoError("missing " + (dir / "index.csv").string());
  std::string line;
  std::getline(index, line);
  if (line.rfind("path,label", 0) != 0)
    throw IoError("index.csv must start with header 'path,label'");

  std::vector<Sample> items;
  while (std::getline(index, line)) {
    if (line.empty() || line == "\r")
      continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw IoError("malformed index.csv line: " + line);
    Sample s;
    s.image = read_png(dir / line.substr(0, comma));
    s.label = std::stoi(line.substr(comma + 1));
    require_same_shape(s.image.shape(), expect, "dataset image");
    items.push_back(std::move(s));
  }
  return LabeledDataset(std::move(items), meta.at("num_classes").get<int>(),
                        meta.value("name", dir.filename().string()));
}

void save_indices(const std::vector<std::size_t> &indices,
                  const fs::path &file) {
  std::ofstream out(file);
  if (!out)
    throw IoError("cannot write " + file.string());
  for (std::size_t i : indices)
    out << i << '\n';
}

std::vector<std::size_t> load_indices(const fs::path &file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot read " + file.string());
  std::vector<std::size_t> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r")
      continue;
    const bool numeric = std::isdigit(static_cast<unsigned char>(line[0]));
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw IoError("non-numeric index line in " + file.string() + ": " +
                    line);
    }
    first = false;
    std::size_t used = 0;
    out.push_back(std::stoull(line, &used));
    if (line.find_first_not_of(" \t\r", used) != std::string::npos)
      throw IoError("trailing characters on index line in " + file.string() + ": " + line);
  }
  return out;
}

} // namespace dovforge
