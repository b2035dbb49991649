// Command-line front end: the whole pipeline as subcommands of one binary.
// Exit codes: 0 success, 1 usage, 2 data/format, 3 numerical failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "vrnmt/data_io.hpp"
#include "vrnmt/decoding.hpp"
#include "vrnmt/gradcheck.hpp"
#include "vrnmt/metrics.hpp"
#include "vrnmt/model.hpp"
#include "vrnmt/training.hpp"

namespace {

using namespace vrnmt;

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  return f;
}

// Wraps each reference sentence as a one-element reference set.
std::vector<std::vector<TokenSeq>> single_refs(std::vector<TokenSeq> refs) {
  std::vector<std::vector<TokenSeq>> out;
  out.reserve(refs.size());
  for (auto& r : refs) {
    std::vector<TokenSeq> one;
    one.push_back(std::move(r));
    out.push_back(std::move(one));
  }
  return out;
}

void require_same_count(std::size_t a, std::size_t b, const std::string& what) {
  if (a != b)
    throw DataError(what + ": line counts differ (" + std::to_string(a) +
                    " vs " + std::to_string(b) + ")");
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": bad number: " + s);
  }
}

// Duplicates every character to two stream buffers (console + log file).
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return sync() == 0 ? 0 : traits_type::eof();
    char ch = traits_type::to_char_type(c);
    if (a_->sputc(ch) == traits_type::eof()) return traits_type::eof();
    if (b_->sputc(ch) == traits_type::eof()) return traits_type::eof();
    return c;
  }
  int sync() override {
    return (a_->pubsync() == 0 && b_->pubsync() == 0) ? 0 : -1;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

// ---------------------------------------------------------------- gen-data

struct GenOpts {
  std::string task = "copy";
  std::size_t pairs = 1000;
  std::size_t vocab_size = 50;
  std::size_t min_len = 3;
  std::size_t max_len = 12;
  double swap_prob = 0.3;
  std::uint64_t seed = 1;
  std::string src_out, tgt_out, align_out;
};

void run_gen_data(const GenOpts& o) {
  ToyCorpus tc = generate_toy_corpus(parse_toy_task(o.task), o.pairs,
                                     o.vocab_size, o.min_len, o.max_len,
                                     o.swap_prob, o.seed);
  save_corpus(tc.corpus, o.src_out, o.tgt_out);
  if (!o.align_out.empty()) save_alignments(tc.alignments, o.align_out);
  std::printf("wrote %zu pairs\n", tc.corpus.size());
}

// ------------------------------------------------------------- build-vocab

struct VocabOpts {
  std::string input, out;
  std::size_t max_size = 10000;
};

void run_build_vocab(const VocabOpts& o) {
  Vocabulary v = Vocabulary::build(load_tokens(o.input), o.max_size);
  v.save(o.out);
  std::printf("vocabulary size %zu\n", v.size());
}

// ------------------------------------------------------------------ train

struct TrainOpts {
  std::string train_src, train_tgt, valid_src, valid_tgt;
  std::string src_vocab, tgt_vocab;
  std::string save, log, init_from;
  std::string variant = "baseline";
  std::string preset = "desk";
  TrainConfig cfg;
};

void run_train(const TrainOpts& o) {
  Vocabulary sv = Vocabulary::load(o.src_vocab);
  Vocabulary tv = Vocabulary::load(o.tgt_vocab);
  TrainConfig cfg = o.cfg;
  cfg.model.variant = parse_variant(o.variant);
  cfg.model.src_vocab = sv.size();
  cfg.model.tgt_vocab = tv.size();
  cfg.validate();

  IdPairs train_ids =
      encode_corpus(load_corpus(o.train_src, o.train_tgt), sv, tv);
  if (o.valid_src.empty() != o.valid_tgt.empty())
    throw UsageError("--valid-src and --valid-tgt must be given together");
  IdPairs valid_ids;
  if (!o.valid_src.empty())
    valid_ids = encode_corpus(load_corpus(o.valid_src, o.valid_tgt), sv, tv);

  ModelParams model = ModelParams::create(cfg.model);
  Rng init_rng(mix_seed(cfg.seed, RngUse::init));
  model.init(init_rng, cfg.orthogonal_init);
  if (!o.init_from.empty()) {
    WarmStartReport rep = warm_start(model, o.init_from);
    std::printf("warm start: %zu tensors loaded, %zu fresh\n",
                rep.loaded.size(), rep.fresh.size());
    for (const auto& n : rep.fresh) std::printf("fresh\t%s\n", n.c_str());
  }

  std::ofstream log_file;
  std::unique_ptr<TeeBuf> tee;
  std::ostream tee_stream(nullptr);
  std::ostream* log = &std::cout;
  if (!o.log.empty()) {
    log_file.open(o.log, std::ios::binary);
    if (!log_file) throw DataError("cannot open for writing: " + o.log);
    tee = std::make_unique<TeeBuf>(std::cout.rdbuf(), log_file.rdbuf());
    tee_stream.rdbuf(tee.get());
    log = &tee_stream;
  }

  auto save_best = [&o](ModelParams& m) {
    if (!o.save.empty()) save_checkpoint(m, o.save);
  };
  TrainResult res = train(model, train_ids, valid_ids, cfg, *log, save_best);
  if (!valid_ids.empty())
    std::printf("best_epoch\t%zu\nbest_valid_nll\t%.17g\n", res.best_epoch,
                res.best_valid_nll);
}

// -------------------------------------------------------------- translate

struct TranslateOpts {
  std::string checkpoint, input, out, src_vocab, tgt_vocab;
  std::size_t beam = 10;
  std::size_t max_out_len = 0;
  bool prior_noise = false;
  std::uint64_t seed = 1;
};

void check_vocab_sizes(const ModelParams& model, const Vocabulary& sv,
                       const Vocabulary& tv) {
  if (sv.size() != model.cfg.src_vocab || tv.size() != model.cfg.tgt_vocab)
    throw DataError("vocabulary sizes do not match the checkpoint");
}

void run_translate(const TranslateOpts& o) {
  if (o.beam == 0) throw UsageError("--beam must be at least 1");
  ModelParams model = load_checkpoint(o.checkpoint);
  Vocabulary sv = Vocabulary::load(o.src_vocab);
  Vocabulary tv = Vocabulary::load(o.tgt_vocab);
  check_vocab_sizes(model, sv, tv);
  std::vector<TokenSeq> lines = load_tokens(o.input);
  Rng noise(mix_seed(o.seed, RngUse::prior_noise));
  std::ofstream out = open_out(o.out);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty())
      throw DataError(o.input + ":" + std::to_string(i + 1) +
                      ": empty sentence");
    std::vector<int> ids = sv.encode(lines[i]);
    std::vector<Hypothesis> hyps = beam_search(
        model, ids, o.beam, o.max_out_len, o.prior_noise ? &noise : nullptr);
    TokenSeq words = tv.decode(hyps.front().ids);
    for (std::size_t k = 0; k < words.size(); ++k)
      out << (k ? " " : "") << words[k];
    out << '\n';
  }
}

// ------------------------------------------------------------------ align

struct AlignOpts {
  std::string checkpoint, src, tgt, src_vocab, tgt_vocab, out;
};

void run_align(const AlignOpts& o) {
  ModelParams model = load_checkpoint(o.checkpoint);
  Vocabulary sv = Vocabulary::load(o.src_vocab);
  Vocabulary tv = Vocabulary::load(o.tgt_vocab);
  check_vocab_sizes(model, sv, tv);
  ParallelCorpus corpus = load_corpus(o.src, o.tgt);
  std::vector<std::vector<std::pair<int, int>>> all;
  all.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<int> x = sv.encode(corpus.src[i]);
    std::vector<int> y = tv.encode(corpus.tgt[i]);
    all.push_back(force_decode_alignments(model, x, y));
  }
  save_alignments(all, o.out);
}

// --------------------------------------------------------------- evaluate

struct EvalOpts {
  std::string metric = "bleu";
  std::string hyp, ref, source, out;
  int n = 0;  // 0 keeps the metric default (bleu order 4, ngrr 1)
  std::size_t bucket_width = 10;
  bool smooth = false;
  bool case_sensitive = false;
};

struct EvalRow {
  std::string metric, bucket;
  double value = 0.0;
  std::size_t count = 0;
};

void write_rows(const std::vector<EvalRow>& rows, const std::string& out_path) {
  std::printf("%-14s %-10s %12s %8s\n", "metric", "bucket", "value", "count");
  for (const auto& r : rows)
    std::printf("%-14s %-10s %12.4f %8zu\n", r.metric.c_str(),
                r.bucket.c_str(), r.value, r.count);
  if (out_path.empty()) return;
  std::ofstream f = open_out(out_path);
  f << "metric,bucket,value,count\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    f << r.metric << ',' << r.bucket << ',' << buf << ',' << r.count << '\n';
  }
}

void run_evaluate(const EvalOpts& o) {
  BleuOptions bo;
  bo.lowercase = !o.case_sensitive;
  bo.smooth = o.smooth;
  std::vector<EvalRow> rows;
  if (o.metric == "bleu" || o.metric == "bucketed-bleu") {
    if (o.n > 0) bo.max_n = o.n;
    std::vector<TokenSeq> cands = load_tokens(o.hyp);
    std::vector<TokenSeq> refs = load_tokens(o.ref);
    require_same_count(cands.size(), refs.size(), "hypotheses vs references");
    std::size_t count = cands.size();
    auto ref_sets = single_refs(std::move(refs));
    rows.push_back({"bleu", "all", bleu(cands, ref_sets, bo), count});
    if (o.metric == "bucketed-bleu") {
      if (o.source.empty())
        throw UsageError("--metric bucketed-bleu requires --source");
      std::vector<TokenSeq> src = load_tokens(o.source);
      require_same_count(src.size(), cands.size(), "source vs hypotheses");
      std::vector<std::size_t> lens;
      lens.reserve(src.size());
      for (const auto& s : src) lens.push_back(s.size());
      for (const BucketScore& b :
           bucketed_bleu(cands, ref_sets, lens, o.bucket_width, bo))
        rows.push_back({"bleu",
                        std::to_string(b.lo) + "-" + std::to_string(b.hi),
                        b.score, b.count});
    }
  } else if (o.metric == "ngrr") {
    int n = o.n > 0 ? o.n : 1;
    std::vector<TokenSeq> sents = load_tokens(o.hyp);
    double v = n_grr(sents, n);
    std::size_t counted = 0;
    for (const auto& s : sents)
      if (s.size() >= static_cast<std::size_t>(n)) ++counted;
    rows.push_back({"ngrr" + std::to_string(n), "all", v, counted});
  } else if (o.metric == "aer") {
    std::vector<LinkSet> pred = load_predicted_alignments(o.hyp);
    GoldAlignments gold = load_gold_alignments(o.ref);
    require_same_count(pred.size(), gold.sure.size(), "predicted vs gold");
    // Corpus AER pools the link counts over all sentences.
    long long hit_s = 0, hit_p = 0, na = 0, ns = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      (void)aer(pred[i], gold.sure[i], gold.possible[i]);  // validates inputs
      for (const auto& l : pred[i]) {
        hit_s += static_cast<long long>(gold.sure[i].count(l));
        hit_p += static_cast<long long>(gold.possible[i].count(l));
      }
      na += static_cast<long long>(pred[i].size());
      ns += static_cast<long long>(gold.sure[i].size());
    }
    double v = (na + ns) == 0
                   ? 0.0
                   : 1.0 - static_cast<double>(hit_s + hit_p) /
                               static_cast<double>(na + ns);
    rows.push_back({"aer", "all", v, pred.size()});
  }
  write_rows(rows, o.out);
}

// ----------------------------------------------------------- significance

struct SigOpts {
  std::string hyp_a, hyp_b, ref;
  std::size_t resamples = 1000;
  std::uint64_t seed = 1;
  bool smooth = false;
  bool case_sensitive = false;
};

void run_significance(const SigOpts& o) {
  BleuOptions bo;
  bo.lowercase = !o.case_sensitive;
  bo.smooth = o.smooth;
  std::vector<TokenSeq> a = load_tokens(o.hyp_a);
  std::vector<TokenSeq> b = load_tokens(o.hyp_b);
  std::vector<TokenSeq> r = load_tokens(o.ref);
  require_same_count(a.size(), b.size(), "system A vs system B");
  require_same_count(a.size(), r.size(), "hypotheses vs references");
  auto refs = single_refs(std::move(r));
  double p = paired_bootstrap(a, b, refs, o.resamples, o.seed, bo);
  std::printf("bleu_a\t%.17g\n", bleu(a, refs, bo));
  std::printf("bleu_b\t%.17g\n", bleu(b, refs, bo));
  std::printf("p_value\t%.17g\n", p);
}

// ------------------------------------------------------------- grad-check

struct GradOpts {
  std::string variant = "all";
  std::size_t vocab = 20;
  std::size_t d_e = 8, d_h = 12, d_z = 6, d_a = 10, d_r = 9;
  std::size_t max_len = 5;
  std::uint64_t seed = 1;
  double tol = 1e-4;
  double step = 1e-5;
};

void run_grad_check(const GradOpts& o) {
  std::vector<Variant> variants;
  if (o.variant == "all")
    variants = {Variant::baseline, Variant::vrnmt, Variant::vrnmt_td};
  else
    variants = {parse_variant(o.variant)};
  double worst = 0.0;
  for (Variant v : variants) {
    ModelConfig mc;
    mc.variant = v;
    mc.src_vocab = o.vocab;
    mc.tgt_vocab = o.vocab;
    mc.d_e = o.d_e;
    mc.d_h = o.d_h;
    mc.d_z = o.d_z;
    mc.d_a = o.d_a;
    mc.d_r = o.d_r;
    ModelParams P = ModelParams::create(mc);
    Rng init_rng(mix_seed(o.seed, RngUse::init));
    P.init(init_rng);
    Rng data_rng(mix_seed(o.seed, RngUse::corpus));
    auto draw = [&](std::size_t len) {
      std::vector<int> ids(len);
      for (auto& t : ids)
        t = data_rng.uniform_int(static_cast<int>(kReservedTokens),
                                 static_cast<int>(o.vocab) - 1);
      return ids;
    };
    std::vector<int> x = draw(static_cast<std::size_t>(
        data_rng.uniform_int(2, static_cast<int>(o.max_len))));
    std::vector<int> y = draw(static_cast<std::size_t>(
        data_rng.uniform_int(2, static_cast<int>(o.max_len))));
    Rng eps_rng(mix_seed(o.seed, RngUse::epsilon));
    std::vector<std::vector<double>> eps_table(y.size() + 1);
    for (auto& e : eps_table) {
      e.resize(mc.d_z);
      eps_rng.fill_normal(e);
    }
    ObjectiveConfig oc;
    oc.eps_table = &eps_table;
    NamedParams np = P.named();
    auto eval = [&](bool with_grad) {
      Graph g;
      ObjectiveResult r = sentence_objective(g, x, y, P, oc);
      Var loss = r.kl.valid() ? g.add(r.nll, r.kl) : r.nll;
      double value = g.scalar(loss);
      if (with_grad) g.backward(loss);
      return value;
    };
    GradCheckResult res = check_gradient(np, eval, o.step);
    std::printf("%s\tmax_rel_err\t%.6g\tworst\t%s[%zu]\n",
                variant_name(v).c_str(), res.max_rel_err,
                res.worst_tensor.c_str(), res.worst_index);
    worst = std::max(worst, res.max_rel_err);
  }
  if (!(worst <= o.tol))
    throw NumericError("gradient check failed: max relative error " +
                       std::to_string(worst) + " exceeds tolerance");
  std::printf("ok\tmax_rel_err\t%.6g\ttol\t%g\n", worst, o.tol);
}

// ----------------------------------------------------------------- report

struct ReportOpts {
  std::vector<std::string> evals;  // system=testset=path
  std::vector<std::string> logs;   // system=path
  std::string out, bucket_out;
};

struct CsvRow {
  std::string metric, bucket, value, count;
};

std::vector<CsvRow> read_eval_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 4 CSV fields");
    if (fields[0] == "metric") continue;  // header
    rows.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  return rows;
}

std::size_t index_of(std::vector<std::string>& names,
                     const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  names.push_back(name);
  return names.size() - 1;
}

void run_report(const ReportOpts& o) {
  std::vector<std::string> systems, testsets;
  std::map<std::pair<std::size_t, std::size_t>, double> cells;
  struct BucketRow {
    std::string system, testset;
    CsvRow row;
  };
  std::vector<BucketRow> buckets;
  for (const std::string& entry : o.evals) {
    std::size_t p1 = entry.find('=');
    std::size_t p2 =
        p1 == std::string::npos ? std::string::npos : entry.find('=', p1 + 1);
    if (p2 == std::string::npos)
      throw UsageError("--eval expects system=testset=path: " + entry);
    std::string system = entry.substr(0, p1);
    std::string testset = entry.substr(p1 + 1, p2 - p1 - 1);
    std::string path = entry.substr(p2 + 1);
    std::size_t si = index_of(systems, system);
    std::size_t ti = index_of(testsets, testset);
    bool have_all = false;
    for (const CsvRow& r : read_eval_csv(path)) {
      if (r.bucket == "all") {
        if (!have_all) {
          cells[{si, ti}] = parse_double(r.value, path);
          have_all = true;
        }
      } else {
        buckets.push_back({system, testset, r});
      }
    }
    if (!have_all)
      throw DataError(path + ": no corpus-level row (bucket \"all\")");
  }

  // Comparison table: systems as rows, test sets as columns.
  std::printf("%-12s", "system");
  for (const auto& t : testsets) std::printf(" %10s", t.c_str());
  std::printf(" %10s\n", "avg");
  for (std::size_t si = 0; si < systems.size(); ++si) {
    std::printf("%-12s", systems[si].c_str());
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t ti = 0; ti < testsets.size(); ++ti) {
      auto it = cells.find({si, ti});
      if (it == cells.end()) {
        std::printf(" %10s", "-");
      } else {
        std::printf(" %10.2f", it->second);
        sum += it->second;
        ++cnt;
      }
    }
    if (cnt)
      std::printf(" %10.2f\n", sum / static_cast<double>(cnt));
    else
      std::printf(" %10s\n", "-");
  }

  if (!o.out.empty()) {
    std::ofstream f = open_out(o.out);
    f << "system";
    for (const auto& t : testsets) f << ',' << t;
    f << ",avg\n";
    char buf[64];
    for (std::size_t si = 0; si < systems.size(); ++si) {
      f << systems[si];
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t ti = 0; ti < testsets.size(); ++ti) {
        auto it = cells.find({si, ti});
        f << ',';
        if (it != cells.end()) {
          std::snprintf(buf, sizeof buf, "%.2f", it->second);
          f << buf;
          sum += it->second;
          ++cnt;
        }
      }
      f << ',';
      if (cnt) {
        std::snprintf(buf, sizeof buf, "%.2f", sum / static_cast<double>(cnt));
        f << buf;
      }
      f << '\n';
    }
  }

  if (!o.bucket_out.empty()) {
    // Bucket rows pass through verbatim so values stay bit-exact.
    std::ofstream f = open_out(o.bucket_out);
    f << "system,testset,metric,bucket,value,count\n";
    for (const auto& b : buckets)
      f << b.system << ',' << b.testset << ',' << b.row.metric << ','
        << b.row.bucket << ',' << b.row.value << ',' << b.row.count << '\n';
  }

  if (!o.logs.empty()) {
    std::printf("\n%-12s %8s %16s %16s\n", "system", "epochs",
                "train_neg_elbo", "valid_nll");
    for (const std::string& entry : o.logs) {
      std::size_t p = entry.find('=');
      if (p == std::string::npos)
        throw UsageError("--log expects system=path: " + entry);
      std::string system = entry.substr(0, p);
      std::string path = entry.substr(p + 1);
      std::ifstream f(path, std::ios::binary);
      if (!f) throw DataError("cannot open: " + path);
      std::string line, last;
      while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) last = line;
      }
      if (last.empty()) throw DataError(path + ": empty training log");
      std::vector<std::string> fields;
      std::stringstream ss(last);
      std::string fld;
      while (std::getline(ss, fld, '\t')) fields.push_back(fld);
      if (fields.size() != 5)
        throw DataError(path + ": malformed training log line");
      std::printf("%-12s %8s %16.4f %16.4f\n", system.c_str(),
                  fields[0].c_str(), parse_double(fields[1], path),
                  parse_double(fields[2], path));
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational recurrent machine translation toolkit"};
  app.require_subcommand(1);
  // One config option on the root so it parses before or after the
  // subcommand name; keys live in a [subcommand] section and explicit
  // flags override them.
  app.fallthrough();
  app.set_config("--config", "",
                 "configuration file with key = value lines in a "
                 "[subcommand] section; flags override");
  app.allow_config_extras(false);

  GenOpts gen;
  auto* g = app.add_subcommand("gen-data",
                               "Generate a synthetic parallel corpus");
  g->add_option("--task", gen.task, "copy|reverse|lexmap|lexmap-swap")
      ->check(CLI::IsMember({"copy", "reverse", "lexmap", "lexmap-swap",
                             "lexmap_swap"}))
      ->capture_default_str();
  g->add_option("--pairs", gen.pairs, "Number of sentence pairs")
      ->capture_default_str();
  g->add_option("--vocab-size", gen.vocab_size,
                "Vocabulary size, the 4 reserved tokens included")
      ->capture_default_str();
  g->add_option("--min-len", gen.min_len, "Minimum source length")
      ->capture_default_str();
  g->add_option("--max-len", gen.max_len, "Maximum source length")
      ->capture_default_str();
  g->add_option("--swap-prob", gen.swap_prob,
                "Adjacent swap rate for lexmap-swap")
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--src-out", gen.src_out, "Source output file")->required();
  g->add_option("--tgt-out", gen.tgt_out, "Target output file")->required();
  g->add_option("--align-out", gen.align_out, "Gold alignment output file");
  g->callback([&gen]() { run_gen_data(gen); });

  VocabOpts voc;
  auto* bv = app.add_subcommand("build-vocab",
                                "Build a vocabulary file from a corpus");
  bv->add_option("--input", voc.input, "Tokenized corpus file")->required();
  bv->add_option("--out", voc.out, "Vocabulary output file")->required();
  bv->add_option("--max-size", voc.max_size,
                 "Vocabulary cap, reserved tokens included")
      ->capture_default_str();
  bv->callback([&voc]() { run_build_vocab(voc); });

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--train-src", tr.train_src, "Training source file")
      ->required();
  t->add_option("--train-tgt", tr.train_tgt, "Training target file")
      ->required();
  t->add_option("--valid-src", tr.valid_src, "Validation source file");
  t->add_option("--valid-tgt", tr.valid_tgt, "Validation target file");
  t->add_option("--src-vocab", tr.src_vocab, "Source vocabulary file")
      ->required();
  t->add_option("--tgt-vocab", tr.tgt_vocab, "Target vocabulary file")
      ->required();
  t->add_option("--save", tr.save, "Checkpoint path for the best model");
  t->add_option("--log", tr.log, "Write epoch lines to this file as well");
  t->add_option("--init-from", tr.init_from,
                "Warm-start checkpoint; name- and shape-matched tensors load");
  t->add_option("--variant", tr.variant, "baseline|vrnmt|vrnmt-td")
      ->check(CLI::IsMember({"baseline", "vrnmt", "vrnmt-td", "vrnmt_td"}))
      ->capture_default_str();
  t->add_option("--preset", tr.preset,
                "Dimension preset: desk 32/64/16/64/64, paper "
                "620/1000/2000/1000/620")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  auto* de = t->add_option("--emb-dim", tr.cfg.model.d_e, "Embedding size")
                 ->capture_default_str();
  auto* dh =
      t->add_option("--hidden-dim", tr.cfg.model.d_h, "Recurrent state size")
          ->capture_default_str();
  auto* dz = t->add_option("--latent-dim", tr.cfg.model.d_z, "Latent size")
                 ->capture_default_str();
  auto* da = t->add_option("--att-dim", tr.cfg.model.d_a, "Attention size")
                 ->capture_default_str();
  auto* dr =
      t->add_option("--readout-dim", tr.cfg.model.d_r, "Readout hidden size")
          ->capture_default_str();
  t->add_option("--lr", tr.cfg.learning_rate, "Learning rate")
      ->capture_default_str();
  t->add_option("--rho", tr.cfg.rho, "RMSProp decay")->capture_default_str();
  t->add_option("--eps", tr.cfg.eps, "RMSProp epsilon")->capture_default_str();
  t->add_option("--momentum", tr.cfg.momentum, "RMSProp momentum")
      ->capture_default_str();
  t->add_option("--clip-norm", tr.cfg.clip_norm, "Global gradient-norm cap")
      ->capture_default_str();
  t->add_option("--dropout", tr.cfg.dropout, "Dropout rate")
      ->capture_default_str();
  t->add_option("--batch-size", tr.cfg.batch_size, "Sentences per batch")
      ->capture_default_str();
  t->add_option("--samples", tr.cfg.L, "Latent samples per step")
      ->capture_default_str();
  t->add_option("--max-len", tr.cfg.max_len, "Drop pairs longer than this")
      ->capture_default_str();
  t->add_option("--epochs", tr.cfg.epochs, "Training epochs")
      ->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "Random seed")->capture_default_str();
  t->add_option("--kl-weight", tr.cfg.kl_weight, "Weight on the KL term")
      ->capture_default_str();
  t->add_option("--kl-anneal", tr.cfg.kl_anneal,
                "Optimizer steps to ramp the KL weight from 0")
      ->capture_default_str();
  t->add_flag("--orthogonal-init", tr.cfg.orthogonal_init,
              "Orthogonal recurrent initialization");
  t->callback([&tr, de, dh, dz, da, dr]() {
    TrainOpts o = tr;
    if (o.preset == "paper") {
      if (!de->count()) o.cfg.model.d_e = 620;
      if (!dh->count()) o.cfg.model.d_h = 1000;
      if (!dz->count()) o.cfg.model.d_z = 2000;
      if (!da->count()) o.cfg.model.d_a = 1000;
      if (!dr->count()) o.cfg.model.d_r = 620;
    }
    run_train(o);
  });

  TranslateOpts tl;
  auto* ts = app.add_subcommand("translate",
                                "Decode a source file with beam search");
  ts->add_option("--checkpoint", tl.checkpoint, "Model checkpoint")
      ->required();
  ts->add_option("--input", tl.input, "Source file")->required();
  ts->add_option("--out", tl.out, "Translation output file")->required();
  ts->add_option("--src-vocab", tl.src_vocab, "Source vocabulary file")
      ->required();
  ts->add_option("--tgt-vocab", tl.tgt_vocab, "Target vocabulary file")
      ->required();
  ts->add_option("--beam", tl.beam, "Beam size")->capture_default_str();
  ts->add_option("--max-out-len", tl.max_out_len,
                 "Output length cap; 0 means 2*source_length + 10")
      ->capture_default_str();
  ts->add_flag("--prior-noise", tl.prior_noise,
               "Sample the latent from the prior instead of its mean");
  ts->add_option("--seed", tl.seed, "Seed for --prior-noise")
      ->capture_default_str();
  ts->callback([&tl]() { run_translate(tl); });

  AlignOpts al;
  auto* as = app.add_subcommand(
      "align", "Extract word alignments by forced decoding");
  as->add_option("--checkpoint", al.checkpoint, "Model checkpoint")
      ->required();
  as->add_option("--src", al.src, "Source file")->required();
  as->add_option("--tgt", al.tgt, "Target (reference) file")->required();
  as->add_option("--src-vocab", al.src_vocab, "Source vocabulary file")
      ->required();
  as->add_option("--tgt-vocab", al.tgt_vocab, "Target vocabulary file")
      ->required();
  as->add_option("--out", al.out, "Alignment output file (i-j per link)")
      ->required();
  as->callback([&al]() { run_align(al); });

  EvalOpts ev;
  auto* es = app.add_subcommand("evaluate", "Score translations or alignments");
  es->add_option("--metric", ev.metric, "bleu|ngrr|aer|bucketed-bleu")
      ->check(CLI::IsMember({"bleu", "ngrr", "aer", "bucketed-bleu"}))
      ->capture_default_str();
  es->add_option("--hyp", ev.hyp,
                 "Hypothesis file (predicted alignments for aer)")
      ->required();
  es->add_option("--ref", ev.ref, "Reference file (gold alignments for aer)");
  es->add_option("--source", ev.source, "Source file for bucketed-bleu");
  es->add_option("--n", ev.n,
                 "N-gram order; 0 keeps the default (bleu 4, ngrr 1)")
      ->capture_default_str();
  es->add_option("--bucket-width", ev.bucket_width,
                 "Source-length bucket width")
      ->capture_default_str();
  es->add_flag("--smooth", ev.smooth, "Add-one BLEU smoothing above order 1");
  es->add_flag("--case-sensitive", ev.case_sensitive,
               "Score without lowercasing");
  es->add_option("--out", ev.out, "CSV output file");
  es->callback([&ev]() {
    if (ev.metric != "ngrr" && ev.ref.empty())
      throw UsageError("--ref is required for --metric " + ev.metric);
    run_evaluate(ev);
  });

  SigOpts sg;
  auto* ss = app.add_subcommand(
      "significance", "Paired bootstrap comparison of two systems");
  ss->add_option("--hyp-a", sg.hyp_a, "System A translations")->required();
  ss->add_option("--hyp-b", sg.hyp_b, "System B translations")->required();
  ss->add_option("--ref", sg.ref, "Reference file")->required();
  ss->add_option("--resamples", sg.resamples, "Bootstrap resamples (>= 100)")
      ->capture_default_str();
  ss->add_option("--seed", sg.seed, "Resampling seed")->capture_default_str();
  ss->add_flag("--smooth", sg.smooth, "Add-one BLEU smoothing above order 1");
  ss->add_flag("--case-sensitive", sg.case_sensitive,
               "Score without lowercasing");
  ss->callback([&sg]() { run_significance(sg); });

  GradOpts gc;
  auto* gs = app.add_subcommand(
      "grad-check", "Finite-difference check of the training gradient");
  gs->add_option("--variant", gc.variant, "all|baseline|vrnmt|vrnmt-td")
      ->check(CLI::IsMember(
          {"all", "baseline", "vrnmt", "vrnmt-td", "vrnmt_td"}))
      ->capture_default_str();
  gs->add_option("--vocab-size", gc.vocab, "Vocabulary size")
      ->capture_default_str();
  gs->add_option("--emb-dim", gc.d_e, "Embedding size")->capture_default_str();
  gs->add_option("--hidden-dim", gc.d_h, "Recurrent state size")
      ->capture_default_str();
  gs->add_option("--latent-dim", gc.d_z, "Latent size")->capture_default_str();
  gs->add_option("--att-dim", gc.d_a, "Attention size")->capture_default_str();
  gs->add_option("--readout-dim", gc.d_r, "Readout hidden size")
      ->capture_default_str();
  gs->add_option("--max-len", gc.max_len, "Sentence length cap")
      ->capture_default_str();
  gs->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  gs->add_option("--tol", gc.tol, "Failure threshold on the relative error")
      ->capture_default_str();
  gs->add_option("--step", gc.step, "Finite-difference step")
      ->capture_default_str();
  gs->callback([&gc]() { run_grad_check(gc); });

  ReportOpts rp;
  auto* rs = app.add_subcommand(
      "report", "Combine evaluation CSVs into a comparison report");
  rs->add_option("--eval", rp.evals,
                 "system=testset=path of an evaluation CSV (repeatable)")
      ->required();
  rs->add_option("--log", rp.logs, "system=path of a training log");
  rs->add_option("--out", rp.out, "Comparison table CSV output");
  rs->add_option("--bucket-out", rp.bucket_out,
                 "Length-bucket CSV output (rows pass through verbatim)");
  rs->callback([&rp]() { run_report(rp); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
