// SPDX-License-Identifier: Apache-2.0
/**
 * @file   corpus.hpp
 * @brief  Paired corpus on disk:
 *
 *   <root>/low/<id>.ppm     degraded input
 *   <root>/gt/<id>.ppm      reference
 *   <root>/manifest.json    {"seed", "size", "pairs": [{"id", "recipe"}]}
 */

#ifndef URWKV_CORPUS_HPP
#define URWKV_CORPUS_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "urwkv/degrade.hpp"

namespace urwkv {

struct CorpusSpec {
  std::size_t count = 0;
  std::size_t size = 64; ///< square side
  std::uint64_t seed = 0;
};

/// Pair i draws from an independent stream seeded by (seed, i).
ImagePair generate_pair(const CorpusSpec &spec, std::size_t index,
                        DegradationRecipe *recipe_out = nullptr);

/// Writes spec.count pairs and the manifest. Throws ImageError on I/O
/// failure.
void write_corpus(const std::string &root, const CorpusSpec &spec);

/// Ids listed in the manifest, or every low/*.ppm with a gt partner when no
/// manifest exists, sorted.
std::vector<std::string> corpus_ids(const std::string &root);

std::vector<ImagePair> load_corpus(const std::string &root);

} // namespace urwkv

#endif // URWKV_CORPUS_HPP
