// SPDX-License-Identifier: Apache-2.0

#include "urwkv/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "urwkv/image.hpp"

namespace urwkv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string pair_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

} // namespace

ImagePair generate_pair(const CorpusSpec &spec, std::size_t index,
                        DegradationRecipe *recipe_out) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                    static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  Rng rng(seq);
  const Tensor reference = synthetic_reference(spec.size, spec.size, rng);
  const DegradationRecipe recipe = random_recipe(rng);
  if (recipe_out != nullptr) {
    *recipe_out = recipe;
  }
  ImagePair pair = degrade(reference, recipe, rng, pair_id(index));
  pair.degraded = quantize8(pair.degraded);
  pair.reference = quantize8(pair.reference);
  return pair;
}

void write_corpus(const std::string &root, const CorpusSpec &spec) {
  std::error_code ec;
  fs::create_directories(fs::path(root) / "low", ec);
  if (!ec) {
    fs::create_directories(fs::path(root) / "gt", ec);
  }
  if (ec) {
    throw ImageError("cannot create corpus directories under " + root + ": " +
                     ec.message());
  }
  json pairs = json::array();
  for (std::size_t i = 0; i < spec.count; ++i) {
    DegradationRecipe recipe;
    const ImagePair pair = generate_pair(spec, i, &recipe);
    write_ppm((fs::path(root) / "low" / (pair.id + ".ppm")).string(),
              pair.degraded);
    write_ppm((fs::path(root) / "gt" / (pair.id + ".ppm")).string(),
              pair.reference);
    pairs.push_back({{"id", pair.id}, {"recipe", to_json(recipe)}});
  }
  std::ofstream out(fs::path(root) / "manifest.json");
  if (!out) {
    throw ImageError("cannot write manifest under " + root);
  }
  out << json{{"seed", spec.seed}, {"size", spec.size}, {"pairs", pairs}}.dump(2)
      << "\n";
}

std::vector<std::string> corpus_ids(const std::string &root) {
  std::vector<std::string> ids;
  const fs::path manifest = fs::path(root) / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    json doc;
    try {
      in >> doc;
      for (const json &p : doc.at("pairs")) {
        ids.push_back(p.at("id").get<std::string>());
      }
    } catch (const json::exception &e) {
      throw ImageError("corrupt manifest " + manifest.string() + ": " +
                       e.what());
    }
    return ids;
  }
  const fs::path low = fs::path(root) / "low";
  if (!fs::is_directory(low)) {
    throw ImageError("no corpus at " + root + " (missing low/ and manifest)");
  }
  for (const auto &entry : fs::directory_iterator(low)) {
    const fs::path p = entry.path();
    if (p.extension() == ".ppm" &&
        fs::exists(fs::path(root) / "gt" / p.filename())) {
      ids.push_back(p.stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<ImagePair> load_corpus(const std::string &root) {
  std::vector<ImagePair> pairs;
  for (const std::string &id : corpus_ids(root)) {
    ImagePair p;
    p.id = id;
    p.degraded = read_ppm((fs::path(root) / "low" / (id + ".ppm")).string());
    p.reference = read_ppm((fs::path(root) / "gt" / (id + ".ppm")).string());
    if (p.degraded.shape() != p.reference.shape()) {
      throw ImageError("pair " + id + " has mismatched shapes");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

} // namespace urwkv
