#include "gtune/codebook.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gtune/errors.hpp"
#include "gtune/rng.hpp"

namespace gtune {

namespace {
using json = nlohmann::ordered_json;

bool is_special_name(const std::string& name) {
    return std::find(kSpecialTokens.begin(), kSpecialTokens.end(), name) != kSpecialTokens.end();
}
}  // namespace

int Codebook::row(const std::string& token) const {
    auto it = vocab.find(token);
    if (it == vocab.end()) throw DataError("unknown token: '" + token + "'");
    return it->second;
}

bool Codebook::is_special(int row_index) const {
    return is_special_name(tokens.at(row_index));
}

std::vector<int> Codebook::tokenize(const std::string& prompt, std::size_t seq_len) const {
    std::vector<int> ids;
    ids.push_back(row("<BoS>"));
    std::istringstream words(prompt);
    std::string w;
    while (words >> w) ids.push_back(row(w));
    ids.push_back(row("<EoS>"));
    if (ids.size() > seq_len) {
        throw DataError("prompt '" + prompt + "' needs " + std::to_string(ids.size()) +
                        " tokens but the sequence length is " + std::to_string(seq_len));
    }
    ids.resize(seq_len, row("<pad>"));
    return ids;
}

std::vector<std::uint8_t> Codebook::special_mask(const std::vector<int>& token_ids) const {
    std::vector<std::uint8_t> mask(token_ids.size());
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        mask[i] = is_special(token_ids[i]) ? 1 : 0;
    }
    return mask;
}

void Codebook::validate() const {
    if (embeddings.rank() != 2) throw DataError("codebook tensor must be 2D");
    if (embeddings.rows() != tokens.size() || trainable.size() != tokens.size()) {
        throw DataError("codebook rows, vocab, and trainable flags disagree");
    }
    for (const auto& s : kSpecialTokens) {
        auto it = vocab.find(s);
        if (it == vocab.end()) throw DataError("codebook vocab missing " + s);
        if (trainable[it->second]) throw DataError("special token marked trainable: " + s);
    }
}

VocabSpec load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open vocab file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("vocab parse error in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw DataError("vocab file must be a JSON array: " + path);
    VocabSpec spec;
    for (const auto& row : j) {
        spec.tokens.push_back(row.at("name").get<std::string>());
        spec.trainable.push_back(row.at("trainable").get<bool>() ? 1 : 0);
    }
    return spec;
}

Codebook random_codebook(const VocabSpec& vocab, std::size_t dim, std::uint64_t seed,
                         float stddev) {
    Codebook cb;
    cb.tokens = vocab.tokens;
    cb.trainable = vocab.trainable;
    for (std::size_t i = 0; i < cb.tokens.size(); ++i) {
        if (!cb.vocab.emplace(cb.tokens[i], static_cast<int>(i)).second) {
            throw DataError("duplicate vocab token: " + cb.tokens[i]);
        }
    }
    cb.embeddings = Tensor::zeros({cb.tokens.size(), dim});
    Rng rng(stage_seed(seed, "codebook-init"));
    for (auto& v : cb.embeddings.data) v = rng.normalf(stddev);
    cb.validate();
    return cb;
}

void save_codebook(const Codebook& cb, const std::string& tensor_path,
                   const std::string& sidecar_path) {
    const std::string tmp_tensor = tensor_path + ".tmp";
    const std::string tmp_sidecar = sidecar_path + ".tmp";
    write_tensor(tmp_tensor, cb.embeddings);
    {
        json rows = json::array();
        for (std::size_t i = 0; i < cb.tokens.size(); ++i) {
            rows.push_back({{"name", cb.tokens[i]}, {"trainable", cb.trainable[i] != 0}});
        }
        std::ofstream out(tmp_sidecar);
        if (!out) throw ValidationError("cannot open for writing: " + sidecar_path);
        out << rows.dump(2) << "\n";
    }
    if (std::rename(tmp_tensor.c_str(), tensor_path.c_str()) != 0 ||
        std::rename(tmp_sidecar.c_str(), sidecar_path.c_str()) != 0) {
        throw ValidationError("atomic rename failed for " + tensor_path);
    }
}

Codebook load_codebook(const std::string& tensor_path, const std::string& sidecar_path) {
    VocabSpec spec = load_vocab(sidecar_path);
    Codebook cb;
    cb.tokens = spec.tokens;
    cb.trainable = spec.trainable;
    for (std::size_t i = 0; i < cb.tokens.size(); ++i) {
        cb.vocab.emplace(cb.tokens[i], static_cast<int>(i));
    }
    cb.embeddings = read_tensor(tensor_path);
    cb.validate();
    return cb;
}

}  // namespace gtune
