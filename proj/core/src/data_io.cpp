#include "vrnmt/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace vrnmt {

Vocabulary Vocabulary::with_reserved() {
  Vocabulary v;
  for (const char* t : kReservedNames) v.tokens.push_back(t);
  v.rebuild_index();
  return v;
}

Vocabulary Vocabulary::build(const std::vector<TokenSeq>& sentences,
                             std::size_t max_size) {
  if (max_size < kReservedTokens + 1)
    throw UsageError("build_vocab: max_size leaves no room beyond reserved");
  if (sentences.empty()) throw DataError("build_vocab: empty corpus");

  std::unordered_map<std::string, std::size_t> freq, first_seen;
  std::size_t pos = 0;
  for (const auto& s : sentences)
    for (const auto& t : s) {
      if (first_seen.find(t) == first_seen.end()) first_seen[t] = pos++;
      ++freq[t];
    }
  std::vector<std::string> ranked;
  ranked.reserve(freq.size());
  for (const auto& [t, f] : freq) ranked.push_back(t);
  std::sort(ranked.begin(), ranked.end(),
            [&](const std::string& a, const std::string& b) {
              if (freq[a] != freq[b]) return freq[a] > freq[b];
              return first_seen[a] < first_seen[b];
            });
  if (ranked.size() > max_size - kReservedTokens)
    ranked.resize(max_size - kReservedTokens);

  Vocabulary v = with_reserved();
  for (auto& t : ranked) v.tokens.push_back(std::move(t));
  v.rebuild_index();
  return v;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i)
    index_[tokens[i]] = static_cast<int>(i);
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens.size())
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const TokenSeq& sentence) const {
  std::vector<int> out;
  out.reserve(sentence.size());
  for (const auto& t : sentence) out.push_back(id(t));
  return out;
}

TokenSeq Vocabulary::decode(const std::vector<int>& ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write vocabulary file " + path);
  for (const auto& t : tokens) f << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read vocabulary file " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty())
      throw DataError("vocabulary file " + path + ": empty token line");
    v.tokens.push_back(line);
  }
  if (v.tokens.size() < kReservedTokens)
    throw DataError("vocabulary file " + path +
                    ": missing the reserved token block");
  v.rebuild_index();
  return v;
}

std::vector<TokenSeq> load_tokens(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read corpus file " + path);
  std::vector<TokenSeq> out;
  std::string line;
  while (std::getline(f, line)) {
    TokenSeq sent;
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) sent.push_back(tok);
    out.push_back(std::move(sent));
  }
  return out;
}

void save_tokens(const std::vector<TokenSeq>& sentences,
                 const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write corpus file " + path);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) f << ' ';
      f << s[i];
    }
    f << '\n';
  }
}

ParallelCorpus load_corpus(const std::string& src_path,
                           const std::string& tgt_path, std::size_t max_len) {
  std::vector<TokenSeq> src = load_tokens(src_path);
  std::vector<TokenSeq> tgt = load_tokens(tgt_path);
  if (src.size() != tgt.size())
    throw DataError("corpus line counts differ: " + src_path + " has " +
                    std::to_string(src.size()) + ", " + tgt_path + " has " +
                    std::to_string(tgt.size()));
  ParallelCorpus out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || tgt[i].empty())
      throw DataError("empty sentence at line " + std::to_string(i + 1));
    if (max_len > 0 &&
        (src[i].size() > max_len || tgt[i].size() > max_len))
      continue;
    out.src.push_back(std::move(src[i]));
    out.tgt.push_back(std::move(tgt[i]));
  }
  return out;
}

void save_corpus(const ParallelCorpus& corpus, const std::string& src_path,
                 const std::string& tgt_path) {
  save_tokens(corpus.src, src_path);
  save_tokens(corpus.tgt, tgt_path);
}

IdPairs encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src,
                      const Vocabulary& tgt) {
  IdPairs out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    out.emplace_back(src.encode(corpus.src[i]), tgt.encode(corpus.tgt[i]));
  return out;
}

ToyTask parse_toy_task(const std::string& s) {
  if (s == "copy") return ToyTask::copy;
  if (s == "reverse") return ToyTask::reverse;
  if (s == "lexmap") return ToyTask::lexmap;
  if (s == "lexmap-swap" || s == "lexmap_swap") return ToyTask::lexmap_swap;
  throw UsageError("unknown task '" + s +
                   "' (expected copy, reverse, lexmap, or lexmap_swap)");
}

namespace {
std::string toy_token(std::size_t type, std::size_t types) {
  int width = 1;
  for (std::size_t t = types - 1; t >= 10; t /= 10) ++width;
  std::string num = std::to_string(type);
  return "w" + std::string(width - static_cast<int>(num.size()), '0') + num;
}

bool swap_decision(std::uint64_t seed, std::size_t left, double swap_prob) {
  Rng r(mix_seed(seed, RngUse::corpus, 0x5157u + left));
  return r.uniform() < swap_prob;
}
}  // namespace

ToyCorpus generate_toy_corpus(ToyTask task, std::size_t pairs,
                              std::size_t vocab_size, std::size_t len_lo,
                              std::size_t len_hi, double swap_prob,
                              std::uint64_t seed) {
  if (vocab_size < kReservedTokens + 1)
    throw UsageError("gen-data: vocab_size must be at least 5");
  if (len_lo == 0 || len_hi < len_lo)
    throw UsageError("gen-data: invalid length range");
  const std::size_t types = vocab_size - kReservedTokens;

  Rng rng(mix_seed(seed, RngUse::corpus));
  std::vector<std::size_t> perm(types);
  for (std::size_t i = 0; i < types; ++i) perm[i] = i;
  if (task == ToyTask::lexmap || task == ToyTask::lexmap_swap)
    rng.shuffle(perm);

  ToyCorpus out;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t len =
        static_cast<std::size_t>(rng.uniform_int(
            static_cast<int>(len_lo), static_cast<int>(len_hi)));
    std::vector<std::size_t> src_types(len);
    for (auto& t : src_types)
      t = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(types) - 1));

    TokenSeq src(len), tgt;
    for (std::size_t i = 0; i < len; ++i)
      src[i] = toy_token(src_types[i], types);
    std::vector<std::pair<int, int>> links;

    switch (task) {
      case ToyTask::copy:
        tgt = src;
        for (std::size_t i = 0; i < len; ++i)
          links.emplace_back(static_cast<int>(i), static_cast<int>(i));
        break;
      case ToyTask::reverse:
        tgt.assign(src.rbegin(), src.rend());
        for (std::size_t i = 0; i < len; ++i)
          links.emplace_back(static_cast<int>(i),
                             static_cast<int>(len - 1 - i));
        break;
      case ToyTask::lexmap:
        tgt.resize(len);
        for (std::size_t i = 0; i < len; ++i) {
          tgt[i] = toy_token(perm[src_types[i]], types);
          links.emplace_back(static_cast<int>(i), static_cast<int>(i));
        }
        break;
      case ToyTask::lexmap_swap: {
        std::vector<std::size_t> order(len);
        for (std::size_t i = 0; i < len; ++i) order[i] = i;
        for (std::size_t k = 0; k + 1 < len;) {
          if (swap_decision(seed, src_types[k], swap_prob)) {
            std::swap(order[k], order[k + 1]);
            k += 2;
          } else {
            ++k;
          }
        }
        tgt.resize(len);
        for (std::size_t j = 0; j < len; ++j) {
          tgt[j] = toy_token(perm[src_types[order[j]]], types);
          links.emplace_back(static_cast<int>(order[j]),
                             static_cast<int>(j));
        }
        break;
      }
    }
    out.corpus.src.push_back(std::move(src));
    out.corpus.tgt.push_back(std::move(tgt));
    std::sort(links.begin(), links.end());
    out.alignments.push_back(std::move(links));
  }
  return out;
}

void save_alignments(const std::vector<std::vector<std::pair<int, int>>>& all,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write alignment file " + path);
  for (const auto& links : all) {
    for (std::size_t i = 0; i < links.size(); ++i) {
      if (i) f << ' ';
      f << links[i].first << '-' << links[i].second;
    }
    f << '\n';
  }
}

namespace {
std::pair<int, int> parse_link(const std::string& item, char sep,
                               const std::string& path) {
  const std::size_t pos = item.find(sep);
  std::size_t used = 0;
  try {
    const int i = std::stoi(item.substr(0, pos), &used);
    if (used != pos) throw std::invalid_argument(item);
    const int j = std::stoi(item.substr(pos + 1), &used);
    if (pos + 1 + used != item.size()) throw std::invalid_argument(item);
    if (i < 0 || j < 0) throw std::invalid_argument(item);
    return {i, j};
  } catch (const std::exception&) {
    throw DataError("alignment file " + path + ": bad link '" + item + "'");
  }
}
}  // namespace

GoldAlignments load_gold_alignments(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read alignment file " + path);
  GoldAlignments out;
  std::string line;
  while (std::getline(f, line)) {
    LinkSet sure, possible;
    std::istringstream ls(line);
    std::string item;
    while (ls >> item) {
      const bool possible_only = item.find('?') != std::string::npos;
      const auto link = parse_link(item, possible_only ? '?' : '-', path);
      possible.insert(link);
      if (!possible_only) sure.insert(link);
    }
    out.sure.push_back(std::move(sure));
    out.possible.push_back(std::move(possible));
  }
  return out;
}

std::vector<LinkSet> load_predicted_alignments(const std::string& path) {
  GoldAlignments g = load_gold_alignments(path);
  return g.possible;
}

namespace {

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& f, const std::string& path) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw DataError("checkpoint " + path + ": truncated file");
  return v;
}

constexpr char kMagic[6] = {'V', 'R', 'N', 'M', 'T', '1'};

std::string config_block(const ModelConfig& cfg) {
  std::ostringstream s;
  s << "variant=" << variant_name(cfg.variant) << '\n'
    << "src_vocab=" << cfg.src_vocab << '\n'
    << "tgt_vocab=" << cfg.tgt_vocab << '\n'
    << "d_e=" << cfg.d_e << '\n'
    << "d_h=" << cfg.d_h << '\n'
    << "d_z=" << cfg.d_z << '\n'
    << "d_a=" << cfg.d_a << '\n'
    << "d_r=" << cfg.d_r << '\n';
  return s.str();
}

ModelConfig parse_config_block(const std::string& text,
                               const std::string& path) {
  ModelConfig cfg;
  std::istringstream s(text);
  std::string line;
  while (std::getline(s, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("checkpoint " + path + ": bad configuration line '" +
                      line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "variant")
        cfg.variant = parse_variant(val);
      else if (key == "src_vocab")
        cfg.src_vocab = std::stoul(val);
      else if (key == "tgt_vocab")
        cfg.tgt_vocab = std::stoul(val);
      else if (key == "d_e")
        cfg.d_e = std::stoul(val);
      else if (key == "d_h")
        cfg.d_h = std::stoul(val);
      else if (key == "d_z")
        cfg.d_z = std::stoul(val);
      else if (key == "d_a")
        cfg.d_a = std::stoul(val);
      else if (key == "d_r")
        cfg.d_r = std::stoul(val);
      else
        throw DataError("checkpoint " + path + ": unknown configuration key '" +
                        key + "'");
    } catch (const UsageError& e) {
      throw DataError(std::string("checkpoint ") + path + ": " + e.what());
    } catch (const std::logic_error&) {
      throw DataError("checkpoint " + path + ": bad value for " + key);
    }
  }
  return cfg;
}

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Streams records until EOF; any partial record is a structure error.
std::vector<TensorRecord> read_records(std::ifstream& f,
                                       const std::string& path) {
  std::vector<TensorRecord> records;
  for (;;) {
    std::uint32_t name_len = 0;
    f.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    if (f.eof()) break;
    if (!f) throw DataError("checkpoint " + path + ": truncated file");
    if (name_len == 0 || name_len > 4096)
      throw DataError("checkpoint " + path + ": implausible tensor name");
    TensorRecord rec;
    rec.name.resize(name_len);
    f.read(rec.name.data(), name_len);
    const std::uint32_t rank = read_u32(f, path);
    if (rank != 1 && rank != 2)
      throw DataError("checkpoint " + path + ": tensor " + rec.name +
                      " has unsupported rank");
    const std::uint32_t rows = read_u32(f, path);
    const std::uint32_t cols = rank == 2 ? read_u32(f, path) : 1;
    rec.shape = rank == 2 ? mat_shape(rows, cols) : vec_shape(rows);
    rec.data.resize(rec.shape.numel());
    f.read(reinterpret_cast<char*>(rec.data.data()),
           static_cast<std::streamsize>(rec.data.size() * sizeof(double)));
    if (!f) throw DataError("checkpoint " + path + ": truncated payload in " +
                            rec.name);
    records.push_back(std::move(rec));
  }
  return records;
}

std::pair<ModelConfig, std::vector<TensorRecord>> read_checkpoint(
    const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path);
  char magic[6];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("checkpoint " + path + ": bad magic bytes");
  const std::uint32_t cfg_len = read_u32(f, path);
  if (cfg_len > 1 << 20)
    throw DataError("checkpoint " + path + ": implausible configuration size");
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), cfg_len);
  if (!f) throw DataError("checkpoint " + path + ": truncated configuration");
  return {parse_config_block(cfg_text, path), read_records(f, path)};
}

}  // namespace

void save_checkpoint(ModelParams& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path);
  f.write(kMagic, sizeof kMagic);
  const std::string cfg = config_block(model.cfg);
  write_u32(f, static_cast<std::uint32_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (auto& [name, t] : model.named()) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(f, t->shape.rank);
    write_u32(f, static_cast<std::uint32_t>(t->shape.rows));
    if (t->shape.rank == 2)
      write_u32(f, static_cast<std::uint32_t>(t->shape.cols));
    f.write(reinterpret_cast<const char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  }
  if (!f) throw DataError("failed writing checkpoint " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  auto [cfg, records] = read_checkpoint(path);
  ModelParams model = ModelParams::create(cfg);
  NamedParams named = model.named();
  std::unordered_map<std::string, Tensor*> by_name;
  for (auto& [name, t] : named) by_name[name] = t;

  std::unordered_map<std::string, bool> seen;
  for (auto& rec : records) {
    auto it = by_name.find(rec.name);
    if (it == by_name.end())
      throw DataError("checkpoint " + path + ": unexpected tensor " +
                      rec.name);
    if (seen[rec.name])
      throw DataError("checkpoint " + path + ": duplicate tensor " +
                      rec.name);
    seen[rec.name] = true;
    if (!(it->second->shape == rec.shape))
      throw DataError("checkpoint " + path + ": shape mismatch for " +
                      rec.name);
    it->second->data = std::move(rec.data);
  }
  if (seen.size() != named.size())
    throw DataError("checkpoint " + path + ": missing tensors (" +
                    std::to_string(seen.size()) + " of " +
                    std::to_string(named.size()) + ")");
  return model;
}

WarmStartReport warm_start(ModelParams& target, const std::string& path) {
  auto [cfg, records] = read_checkpoint(path);
  (void)cfg;
  NamedParams named = target.named();
  std::unordered_map<std::string, Tensor*> by_name;
  for (auto& [name, t] : named) by_name[name] = t;

  WarmStartReport report;
  std::unordered_map<std::string, bool> covered;
  for (auto& rec : records) {
    auto it = by_name.find(rec.name);
    if (it == by_name.end()) continue;  // tensor absent in the target variant
    if (!(it->second->shape == rec.shape))
      throw DataError("warm start " + path + ": shape mismatch for " +
                      rec.name);
    it->second->data = std::move(rec.data);
    covered[rec.name] = true;
    report.loaded.push_back(rec.name);
  }
  for (auto& [name, t] : named)
    if (!covered.count(name)) report.fresh.push_back(name);
  return report;
}

}  // namespace vrnmt
