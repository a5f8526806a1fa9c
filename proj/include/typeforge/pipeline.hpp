#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "typeforge/corpus.hpp"
#include "typeforge/embedding.hpp"
#include "typeforge/encoder.hpp"
#include "typeforge/gcn.hpp"
#include "typeforge/graph.hpp"
#include "typeforge/inference.hpp"
#include "typeforge/io.hpp"
#include "typeforge/metrics.hpp"
#include "typeforge/training.hpp"
#include "typeforge/typing.hpp"

namespace typeforge {

// workdir artifact names
inline constexpr const char* kCorpusBundle = "corpus.bin";
inline constexpr const char* kPivotsFile = "pivots.bin";
inline constexpr const char* kGraphEdges = "graph.edges";
inline constexpr const char* kGraphMeta = "graph_meta.json";
inline constexpr const char* kGraphNormalized = "graph_normalized.txt";
inline constexpr const char* kEncoderCheckpoint = "encoder.ckpt";
inline constexpr const char* kGcnCheckpoint = "gcn.ckpt";
inline constexpr const char* kTypingCheckpoint = "typing.ckpt";
inline constexpr const char* kTrainLog = "train.log";
inline constexpr const char* kPredictionsFile = "predictions.tsv";
inline constexpr const char* kReportFile = "report.txt";
inline constexpr const char* kLockFile = ".lock";

struct Workdir {
  std::filesystem::path root;

  // TYPEFORGE_WORKDIR, when set, overrides the flag value
  static Workdir resolve(const std::string& flag_value) {
    const char* env = std::getenv("TYPEFORGE_WORKDIR");
    Workdir w;
    w.root = (env != nullptr && env[0] != '\0') ? env : flag_value;
    if (w.root.empty()) {
      throw ValidationError("no workdir given (use --workdir or TYPEFORGE_WORKDIR)");
    }
    std::filesystem::create_directories(w.root);
    return w;
  }

  std::string file(const std::string& name) const {
    return (root / name).string();
  }
};

// One writer per workdir. The lock file is created exclusively and removed on
// scope exit; a left-over lock from a crashed run must be deleted by hand.
class WorkdirLock {
 public:
  explicit WorkdirLock(const Workdir& w) : path_(w.file(kLockFile)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw ValidationError("workdir is locked by another command (" + path_ +
                            " exists)");
    }
  }
  ~WorkdirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

// written before any stage output so a workdir always names its inputs
inline void write_provenance(const Workdir& w, const std::string& command,
                             const nlohmann::json& config) {
  auto os = open_output(w.file(command + "_config.json"), /*binary=*/false);
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  os << j.dump(2) << '\n';
  if (!os) throw ValidationError("failed writing provenance for " + command);
}

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// --- ingest -------------------------------------------------------------------

struct IngestOptions {
  std::vector<std::pair<std::string, Split>> inputs;
};

struct IngestSummary {
  int records = 0;
  int mentions = 0;
  int types = 0;
  double clean_pct = 0.0;
  std::vector<std::string> warnings;
};

inline IngestSummary run_ingest(const Workdir& w, const IngestOptions& options) {
  if (options.inputs.empty()) {
    throw ValidationError("ingest: no input files given");
  }
  WorkdirLock lock(w);
  nlohmann::json cfg;
  for (const auto& [path, split] : options.inputs) {
    cfg["inputs"].push_back({{"path", path}, {"split", split_name(split)}});
  }
  write_provenance(w, "ingest", cfg);

  ParseDiagnostics diag;
  const Corpus corpus = parse_dataset_files(options.inputs, diag);
  if (!diag.errors.empty()) {
    throw ValidationError("ingest rejected " +
                          std::to_string(diag.errors.size()) + " record(s):\n" +
                          diag.error_summary());
  }
  save_corpus(corpus, w.file(kCorpusBundle));

  IngestSummary s;
  s.records = static_cast<int>(corpus.records.size());
  s.mentions = corpus.mention_count();
  s.types = corpus.hierarchy.size();
  s.clean_pct = 100.0 * clean_fraction(corpus);
  s.warnings = diag.warnings;
  return s;
}

// --- pivots -------------------------------------------------------------------

struct EmbeddingSource {
  std::string path;
  bool text = false;
};

inline TokenEmbeddingTable load_embedding_source(const EmbeddingSource& src) {
  if (src.path.empty()) {
    throw ValidationError("no embedding file given (use --embeddings)");
  }
  return src.text ? load_embeddings_text(src.path)
                  : load_embeddings_binary(src.path);
}

struct PivotsSummary {
  int types = 0;
  int usable = 0;
};

inline PivotsSummary run_pivots(const Workdir& w, const EmbeddingSource& src) {
  WorkdirLock lock(w);
  write_provenance(w, "pivots",
                   {{"embeddings", src.path}, {"format", src.text ? "text" : "binary"}});
  const Corpus corpus = load_corpus(w.file(kCorpusBundle));
  const TokenEmbeddingTable table = load_embedding_source(src);
  const Matrix embeddings = mention_embedding_matrix(corpus, table);
  const PivotSet pivots = compute_pivots(corpus, embeddings);
  save_pivots(pivots, w.file(kPivotsFile));
  return {pivots.type_count(), pivots.usable_count()};
}

// --- graph --------------------------------------------------------------------

struct GraphOptions {
  EmbeddingSource embeddings;
  GraphMode mode = GraphMode::attn;
  double thr = 0.85;
  std::uint64_t seed = 0;
  bool seed_given = false;  // rnd mode requires an explicit seed
  std::optional<int> max_clique;
};

struct GraphSummary {
  int nodes = 0;
  std::size_t edges = 0;
  GraphMode mode = GraphMode::attn;
  int skipped_zero = 0;
  int dropped_attention = 0;
};

inline GraphSummary run_graph(const Workdir& w, const GraphOptions& options) {
  if (options.thr <= 0.0 || options.thr > 1.0) {
    throw ValidationError("graph: --thr must lie in (0, 1]");
  }
  if (options.mode == GraphMode::rnd && !options.seed_given) {
    throw ValidationError("graph: --seed is required with --mode rnd");
  }
  WorkdirLock lock(w);
  nlohmann::json cfg{{"mode", graph_mode_name(options.mode)},
                     {"thr", options.thr},
                     {"seed", options.seed},
                     {"embeddings", options.embeddings.path}};
  if (options.max_clique) cfg["max_clique"] = *options.max_clique;
  write_provenance(w, "graph", cfg);

  const Corpus corpus = load_corpus(w.file(kCorpusBundle));
  const TokenEmbeddingTable table = load_embedding_source(options.embeddings);
  const Matrix embeddings = mention_embedding_matrix(corpus, table);
  const PivotSet pivots = compute_pivots(corpus, embeddings);

  const CandidateAssignment assignment =
      assign_candidates(corpus, embeddings, pivots, options.thr);
  GraphBuildOptions build;
  build.mode = options.mode;
  build.seed = options.seed;
  build.max_clique = options.max_clique;
  RefinementGraph graph = build_graph(assignment.by_type, corpus.mention_count(),
                                      assignment.eligible, build);
  int dropped = 0;
  if (options.mode == GraphMode::attn) {
    dropped = attach_attention(graph, embeddings);
  }
  const NormalizedAdjacency adjacency = normalize(graph);

  save_graph_edges(graph, w.file(kGraphEdges));
  save_normalized_triples(adjacency, w.file(kGraphNormalized));
  {
    auto os = open_output(w.file(kGraphMeta), /*binary=*/false);
    nlohmann::json meta{{"mode", graph_mode_name(graph.mode)},
                        {"n", graph.n},
                        {"edges", graph.edges.size()},
                        {"thr", options.thr},
                        {"seed", options.seed}};
    os << meta.dump(2) << '\n';
  }

  GraphSummary s;
  s.nodes = graph.n;
  s.edges = graph.edges.size();
  s.mode = graph.mode;
  s.skipped_zero = assignment.skipped_zero;
  s.dropped_attention = dropped;
  return s;
}

inline NormalizedAdjacency load_adjacency(const Workdir& w, int expect_n) {
  auto is = open_input(w.file(kGraphMeta), /*binary=*/false);
  nlohmann::json meta = nlohmann::json::parse(is, nullptr, false);
  if (meta.is_discarded() || !meta.contains("n") || !meta.contains("mode")) {
    throw ValidationError("corrupt graph metadata in workdir");
  }
  const int n = meta["n"].get<int>();
  if (n != expect_n) {
    throw ValidationError("graph was built over " + std::to_string(n) +
                          " nodes but the corpus has " +
                          std::to_string(expect_n) + " mentions");
  }
  const auto mode = parse_graph_mode(meta["mode"].get<std::string>());
  if (!mode) throw ValidationError("corrupt graph mode in metadata");
  const RefinementGraph graph = load_graph_edges(w.file(kGraphEdges), n, *mode);
  return normalize(graph);
}

// --- train --------------------------------------------------------------------

struct Phase1Source {
  bool builtin = true;
  std::string file;  // representation file when not builtin
};

// accepts "builtin" or "file:PATH"
inline Phase1Source parse_phase1(const std::string& s) {
  if (s == "builtin") return {true, ""};
  if (s.rfind("file:", 0) == 0 && s.size() > 5) return {false, s.substr(5)};
  throw ValidationError("invalid --phase1 value '" + s +
                        "' (expected builtin or file:PATH)");
}

struct TrainOptions {
  EmbeddingSource embeddings;  // builtin phase-1 only
  Phase1Source phase1;
  RepresentationLayout layout;
  int window = 5;
  TrainConfig config;
};

struct TrainSummary {
  int rounds = 0;
  int best_round = 0;
  double best_dev_macro = 0.0;
  bool aborted = false;
};

inline TrainSummary run_train(const Workdir& w, const TrainOptions& options) {
  WorkdirLock lock(w);
  nlohmann::json cfg{{"phase1", options.phase1.builtin
                                    ? std::string("builtin")
                                    : "file:" + options.phase1.file},
                     {"window", options.window},
                     {"layout",
                      {{"mention_dim", options.layout.mention_dim},
                       {"context_dim", options.layout.context_dim},
                       {"position_dim", options.layout.position_dim}}},
                     {"hidden_dim", options.config.hidden_dim},
                     {"output_dim", options.config.output_dim},
                     {"lr", options.config.adam.lr},
                     {"rounds", options.config.max_rounds},
                     {"batch", options.config.batch_size},
                     {"seed", options.config.seed},
                     {"tol", options.config.tol},
                     {"phase1_epochs", options.config.phase1_epochs},
                     {"phase2_steps", options.config.phase2_steps},
                     {"embeddings", options.embeddings.path}};
  write_provenance(w, "train", cfg);

  const Corpus corpus = load_corpus(w.file(kCorpusBundle));
  const NormalizedAdjacency adjacency = load_adjacency(w, corpus.mention_count());

  TrainInputs inputs;
  inputs.corpus = &corpus;
  inputs.adjacency = &adjacency;
  TokenEmbeddingTable table;
  if (options.phase1.builtin) {
    table = load_embedding_source(options.embeddings);
    inputs.table = &table;
    inputs.layout = options.layout;
    inputs.window = options.window;
  } else {
    inputs.fixed_representations = load_representations(options.phase1.file);
  }

  const TrainResult result = train(inputs, options.config);

  if (result.best.encoder) {
    save_encoder(*result.best.encoder, w.file(kEncoderCheckpoint));
  }
  save_gcn(result.best.gcn, w.file(kGcnCheckpoint));
  save_labels(result.best.labels, w.file(kTypingCheckpoint));
  {
    auto os = open_output(w.file(kTrainLog), /*binary=*/false);
    for (const auto& r : result.log) {
      os << "round=" << r.round << " L_clean=" << format_fixed(r.clean_loss)
         << " L_noisy=" << format_fixed(r.noisy_loss)
         << " dev_strict=" << format_fixed(r.dev.strict)
         << " dev_macro=" << format_fixed(r.dev.macro_f1)
         << " dev_micro=" << format_fixed(r.dev.micro_f1)
         << " wall_s=" << format_fixed(r.seconds, 3) << '\n';
    }
  }

  TrainSummary s;
  s.rounds = static_cast<int>(result.log.size());
  s.best_round = result.best_round;
  s.best_dev_macro = result.best_dev_macro;
  s.aborted = result.aborted;
  return s;
}

// --- eval ---------------------------------------------------------------------

struct EvalOptions {
  EmbeddingSource embeddings;
  std::optional<Phase1Source> phase1;       // default: builtin via checkpoint
  bool force_root = false;
  std::optional<std::string> predictions;   // score an existing file instead
};

struct EvalSummary {
  MetricsReport report;
  int test_mentions = 0;
};

namespace detail {

// X for the trained model: builtin encoder checkpoint or representation file
inline Matrix representations_for(const Workdir& w, const Corpus& corpus,
                                  const EvalOptions& options) {
  if (options.phase1 && !options.phase1->builtin) {
    Matrix x = load_representations(options.phase1->file);
    if (x.rows() != static_cast<std::size_t>(corpus.mention_count())) {
      throw ValidationError("representation file row count " +
                            std::to_string(x.rows()) +
                            " does not match corpus mention count " +
                            std::to_string(corpus.mention_count()));
    }
    return x;
  }
  const std::string ckpt = w.file(kEncoderCheckpoint);
  if (!std::filesystem::exists(ckpt)) {
    throw ValidationError("missing encoder checkpoint " + ckpt +
                          " (train first, or pass --phase1 file:PATH)");
  }
  const EncoderParams encoder = load_encoder(ckpt);
  const TokenEmbeddingTable table = load_embedding_source(options.embeddings);
  return encode_all(encoder, corpus, table);
}

inline std::vector<const Mention*> test_mentions(const Corpus& corpus) {
  std::vector<const Mention*> out;
  for (const auto& m : corpus.mentions) {
    if (m.split == Split::test) out.push_back(&m);
  }
  if (out.empty()) throw ValidationError("corpus has no test-split mentions");
  return out;
}

}  // namespace detail

inline void write_predictions(const Corpus& corpus,
                              const std::vector<Prediction>& predictions,
                              const std::string& path) {
  auto os = open_output(path, /*binary=*/false);
  for (const auto& p : predictions) {
    os << p.mention << '\t';
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      if (i > 0) os << ',';
      os << corpus.hierarchy.type(p.labels[i]).full();
    }
    os << '\n';
  }
  if (!os) throw ValidationError("failed writing predictions: " + path);
}

inline std::vector<Prediction> read_predictions(const Corpus& corpus,
                                                const std::string& path) {
  auto is = open_input(path, /*binary=*/false);
  std::vector<Prediction> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    Prediction p;
    try {
      p.mention = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      throw ValidationError(path + ":line " + std::to_string(line_no) +
                            ": malformed mention id");
    }
    if (tab != std::string::npos) {
      std::stringstream labels(line.substr(tab + 1));
      std::string item;
      while (std::getline(labels, item, ',')) {
        if (item.empty()) continue;
        const int id = corpus.hierarchy.find(item);
        if (id < 0) {
          throw ValidationError(path + ":line " + std::to_string(line_no) +
                                ": unknown type '" + item + "'");
        }
        p.labels.push_back(id);
      }
      std::sort(p.labels.begin(), p.labels.end());
      p.labels.erase(std::unique(p.labels.begin(), p.labels.end()),
                     p.labels.end());
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) {
    throw ValidationError("empty predictions file: " + path);
  }
  return out;
}

inline std::string render_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "            strict  mac-F1  mic-F1\n";
  os << "typeforge   " << format_fixed(r.strict, 4) << "  "
     << format_fixed(r.macro_f1, 4) << "  " << format_fixed(r.micro_f1, 4)
     << "\n\n";
  os << "strict=" << format_fixed(r.strict) << '\n';
  os << "macro_f1=" << format_fixed(r.macro_f1) << '\n';
  os << "micro_f1=" << format_fixed(r.micro_f1) << '\n';
  return os.str();
}

inline EvalSummary run_eval(const Workdir& w, const EvalOptions& options) {
  WorkdirLock lock(w);
  nlohmann::json cfg{{"force_root", options.force_root}};
  if (options.predictions) cfg["predictions"] = *options.predictions;
  if (options.phase1) {
    cfg["phase1"] = options.phase1->builtin ? std::string("builtin")
                                            : "file:" + options.phase1->file;
  }
  write_provenance(w, "eval", cfg);

  const Corpus corpus = load_corpus(w.file(kCorpusBundle));
  const auto test = detail::test_mentions(corpus);

  std::vector<std::vector<int>> pred_sets;
  if (options.predictions) {
    const auto preds = read_predictions(corpus, *options.predictions);
    std::map<int, const Prediction*> by_id;
    for (const auto& p : preds) by_id[p.mention] = &p;
    for (const Mention* m : test) {
      auto it = by_id.find(m->id);
      if (it == by_id.end()) {
        throw ValidationError("missing prediction for test mention " +
                              std::to_string(m->id));
      }
      pred_sets.push_back(it->second->labels);
    }
  } else {
    const std::string gcn_path = w.file(kGcnCheckpoint);
    if (!std::filesystem::exists(gcn_path)) {
      throw ValidationError("missing checkpoint " + gcn_path + " (train first)");
    }
    const GcnParams gcn = load_gcn(gcn_path);
    const LabelEmbeddings labels = load_labels(w.file(kTypingCheckpoint));
    const Matrix x = detail::representations_for(w, corpus, options);
    const NormalizedAdjacency adjacency =
        load_adjacency(w, corpus.mention_count());
    const Matrix phi = gcn_forward(adjacency, x, gcn);

    std::vector<Prediction> predictions;
    for (const Mention* m : test) {
      Prediction p = top_down_infer(phi.row(m->id), labels, corpus.hierarchy,
                                    options.force_root);
      p.mention = m->id;
      pred_sets.push_back(p.labels);
      predictions.push_back(std::move(p));
    }
    write_predictions(corpus, predictions, w.file(kPredictionsFile));
  }

  std::vector<std::vector<int>> gold;
  for (const Mention* m : test) gold.push_back(m->labels);

  EvalSummary s;
  s.report = evaluate(pred_sets, gold);
  s.test_mentions = static_cast<int>(test.size());
  {
    auto os = open_output(w.file(kReportFile), /*binary=*/false);
    os << render_report(s.report);
  }
  return s;
}

// --- neighbors ------------------------------------------------------------------

struct NeighborsOptions {
  EmbeddingSource embeddings;
  std::optional<Phase1Source> phase1;
  int query = -1;
  int k = 5;
  bool refined = true;  // refined Phi_m vs phase-1 X_m space
};

struct NeighborRow {
  int mention = -1;
  double similarity = 0.0;
  std::string surface;
  std::string labels;
};

struct NeighborsSummary {
  std::vector<NeighborRow> rows;
  bool truncated = false;
};

inline NeighborsSummary run_neighbors(const Workdir& w,
                                      const NeighborsOptions& options) {
  WorkdirLock lock(w);
  write_provenance(w, "neighbors",
                   {{"query", options.query},
                    {"k", options.k},
                    {"space", options.refined ? "refined" : "phase1"}});
  const Corpus corpus = load_corpus(w.file(kCorpusBundle));
  EvalOptions eval_opts;
  eval_opts.embeddings = options.embeddings;
  eval_opts.phase1 = options.phase1;
  Matrix reps = detail::representations_for(w, corpus, eval_opts);
  if (options.refined) {
    const std::string gcn_path = w.file(kGcnCheckpoint);
    if (!std::filesystem::exists(gcn_path)) {
      throw ValidationError("missing checkpoint " + gcn_path + " (train first)");
    }
    const GcnParams gcn = load_gcn(gcn_path);
    const NormalizedAdjacency adjacency =
        load_adjacency(w, corpus.mention_count());
    reps = gcn_forward(adjacency, reps, gcn);
  }
  const auto result = nearest_neighbors(reps, options.query, options.k);
  NeighborsSummary s;
  s.truncated = result.truncated;
  for (const auto& nb : result.neighbors) {
    const Mention& m = corpus.mentions[nb.mention];
    std::string labels;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      if (i > 0) labels += ',';
      labels += corpus.hierarchy.type(m.labels[i]).full();
    }
    s.rows.push_back({nb.mention, nb.similarity, corpus.surface(m), labels});
  }
  return s;
}

}  // namespace typeforge
