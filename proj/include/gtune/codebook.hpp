#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gtune/tensor.hpp"

namespace gtune {

inline const std::vector<std::string> kSpecialTokens = {"<BoS>", "<EoS>", "<pad>", "<and>"};

// Token-embedding matrix with a per-row trainable flag. Location rows are
// trainable; pathology words, special tokens, and reserved sub-word rows stay
// frozen for the whole run.
struct Codebook {
    Tensor embeddings;               // rows x dim, default 46 x 1024
    std::vector<std::uint8_t> trainable;  // per row
    std::vector<std::string> tokens;      // row -> name
    std::map<std::string, int> vocab;     // name -> row

    std::size_t size() const { return tokens.size(); }
    std::size_t dim() const { return embeddings.rank() == 2 ? embeddings.cols() : 0; }

    int row(const std::string& token) const;  // throws DataError on unknown token
    bool is_special(int row_index) const;

    // <BoS> words... <EoS> <pad>*, padded to seq_len.
    std::vector<int> tokenize(const std::string& prompt, std::size_t seq_len) const;
    std::vector<std::uint8_t> special_mask(const std::vector<int>& token_ids) const;

    void validate() const;
};

// Vocabulary fixture: JSON list of {"name", "trainable"} in row order.
struct VocabSpec {
    std::vector<std::string> tokens;
    std::vector<std::uint8_t> trainable;
};

VocabSpec load_vocab(const std::string& path);

Codebook random_codebook(const VocabSpec& vocab, std::size_t dim, std::uint64_t seed,
                         float stddev = 1.0f);

// Binary tensor + sidecar JSON (vocab and trainable flags). Written via
// temp-file rename so concurrent readers never see a torn file.
void save_codebook(const Codebook& cb, const std::string& tensor_path,
                   const std::string& sidecar_path);
Codebook load_codebook(const std::string& tensor_path, const std::string& sidecar_path);

}  // namespace gtune
