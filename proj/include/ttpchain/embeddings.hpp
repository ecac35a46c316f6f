#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <fstream>
#include <istream>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttpchain/error.hpp"

namespace ttpchain {

class WordVectors {
 public:
  WordVectors() = default;
  explicit WordVectors(std::size_t dim) : dim_(dim) {
    if (dim_ < 1) throw ContractViolation("WordVectors: dim must be >= 1");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

  // Keeps the first vector seen for a token; returns false for duplicates.
  bool add(std::string token, std::vector<double> v) {
    if (v.size() != dim_) throw ContractViolation("WordVectors: vector length != dim");
    return table_.try_emplace(std::move(token), std::move(v)).second;
  }

  const std::vector<double>* find(const std::string& token) const {
    auto it = table_.find(token);
    return it == table_.end() ? nullptr : &it->second;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

namespace embeddings {

// word2vec text format: "V D" header, then V lines "token v1 ... vD".
inline WordVectors parse_word_vectors(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("word vectors: missing header", 0, 1);
  std::istringstream header(line);
  long long vocab = -1, dim = -1;
  std::string extra;
  if (!(header >> vocab >> dim) || (header >> extra) || vocab < 0 || dim < 1)
    throw ParseError("word vectors: header must be 'V D'", 0, 1);

  WordVectors wv(static_cast<std::size_t>(dim));
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(dim));
    std::string field;
    while (row >> field) {
      char* end = nullptr;
      double x = std::strtod(field.c_str(), &end);
      if (end != field.c_str() + field.size())
        throw ParseError("word vectors: bad number '" + field + "' on line " + std::to_string(line_no), 0, line_no);
      v.push_back(x);
    }
    if (v.size() != static_cast<std::size_t>(dim))
      throw ParseError("word vectors: line " + std::to_string(line_no) + " has " + std::to_string(v.size()) +
                           " values, expected " + std::to_string(dim),
                       0, line_no);
    wv.add(std::move(token), std::move(v));
    ++rows;
  }
  if (rows != static_cast<std::size_t>(vocab))
    throw ParseError("word vectors: header declares " + std::to_string(vocab) + " rows, found " +
                         std::to_string(rows),
                     0, line_no);
  return wv;
}

inline WordVectors load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_word_vectors(in);
}

// Mean of in-vocabulary token vectors; zero vector when none are known.
inline std::vector<double> sentence_vector(const WordVectors& wv, std::span<const std::string> tokens) {
  std::vector<double> sum(wv.dim(), 0.0);
  std::size_t known = 0;
  for (const auto& t : tokens) {
    if (const auto* v = wv.find(t)) {
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += (*v)[k];
      ++known;
    }
  }
  if (known > 0)
    for (auto& x : sum) x /= static_cast<double>(known);
  return sum;
}

// Zero when either vector has zero norm.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ContractViolation("cosine: length mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    nu += u[k] * u[k];
    nv += v[k] * v[k];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace embeddings
}  // namespace ttpchain
