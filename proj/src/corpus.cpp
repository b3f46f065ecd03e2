#include "sscc/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "sscc/util.hpp"

namespace sscc::corpus {

Tokens tokenize(const std::string& text) {
  Tokens out;
  out.reserve(text.size() + 1);
  for (unsigned char c : text) out.push_back(static_cast<int32_t>(c));
  out.push_back(kEos);
  return out;
}

std::string detokenize(const Tokens& tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    int32_t t = tokens[i];
    if (t >= 0 && t < 256) {
      out.push_back(static_cast<char>(t));
    } else if (t == kEos && i + 1 == tokens.size()) {
      break;
    } else {
      throw std::invalid_argument("detokenize: special token at interior position");
    }
  }
  return out;
}

std::string detokenize_lenient(const Tokens& tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (int32_t t : tokens) {
    if (t == kEos) break;
    if (t >= 0 && t < 256) out.push_back(static_cast<char>(t));
  }
  return out;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::vector<std::string> split_sentences(const std::string& raw) {
  std::vector<std::string> out;
  size_t line_start = 0;
  auto flush_line = [&](const std::string& line) {
    size_t start = 0;
    for (size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      bool end_mark = (c == '.' || c == '!' || c == '?');
      if (end_mark && (i + 1 == line.size() || is_space(line[i + 1]))) {
        std::string s = trim(line.substr(start, i + 1 - start));
        if (!s.empty()) out.push_back(s);
        start = i + 1;
      }
    }
    std::string tail = trim(line.substr(start));
    if (!tail.empty()) out.push_back(tail);
  };
  for (size_t i = 0; i <= raw.size(); ++i) {
    if (i == raw.size() || raw[i] == '\n') {
      flush_line(raw.substr(line_start, i - line_start));
      line_start = i + 1;
    }
  }
  return out;
}

CorpusSplit prepare_corpus(const std::string& raw, uint64_t seed) {
  if (raw.empty()) throw std::invalid_argument("prepare_corpus: empty input");
  std::vector<std::string> sentences = split_sentences(raw);

  std::vector<std::string> unique;
  unique.reserve(sentences.size());
  std::unordered_set<std::string> seen;
  for (auto& s : sentences) {
    if (seen.insert(s).second) unique.push_back(s);
  }
  if (unique.size() < 10) throw std::runtime_error("prepare_corpus: fewer than 10 sentences after dedup");

  // Fisher-Yates with the project RNG (recorded in metadata).
  Rng rng(seed);
  for (size_t i = unique.size() - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng.below(i + 1));
    std::swap(unique[i], unique[j]);
  }

  size_t n = unique.size();
  size_t n_train = (n * 8) / 10;
  size_t n_val = n / 10;

  CorpusSplit split;
  split.seed = seed;
  split.shuffle_algo = "splitmix64-fisher-yates";
  split.train.assign(unique.begin(), unique.begin() + n_train);
  split.val.assign(unique.begin() + n_train, unique.begin() + n_train + n_val);
  split.test.assign(unique.begin() + n_train + n_val, unique.end());
  return split;
}

namespace {

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

void save_split(const CorpusSplit& split, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_lines(dir + "/train.txt", split.train);
  write_lines(dir + "/val.txt", split.val);
  write_lines(dir + "/test.txt", split.test);
  nlohmann::json meta;
  meta["seed"] = split.seed;
  meta["shuffle_algo"] = split.shuffle_algo;
  meta["train_count"] = split.train.size();
  meta["val_count"] = split.val.size();
  meta["test_count"] = split.test.size();
  write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
}

CorpusSplit load_split(const std::string& dir) {
  CorpusSplit split;
  split.train = read_lines(dir + "/train.txt");
  split.val = read_lines(dir + "/val.txt");
  split.test = read_lines(dir + "/test.txt");
  auto meta = nlohmann::json::parse(read_text_file(dir + "/meta.json"));
  split.seed = meta.value("seed", 0ull);
  split.shuffle_algo = meta.value("shuffle_algo", std::string());
  return split;
}

}  // namespace sscc::corpus
