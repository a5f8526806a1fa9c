#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "typeforge/pipeline.hpp"

namespace {

using namespace typeforge;

struct CommonArgs {
  std::string workdir;
  std::string embeddings;
  std::string format = "binary";

  EmbeddingSource embedding_source() const {
    if (format != "binary" && format != "text") {
      throw ValidationError("--format must be binary or text");
    }
    return {embeddings, format == "text"};
  }
};

void add_embedding_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--embeddings", args.embeddings, "token embedding file");
  cmd->add_option("--format", args.format,
                  "embedding file format: binary or text");
}

int run(int argc, char** argv) {
  CLI::App app{"typeforge: transductive fine-grained entity typing pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--workdir", common.workdir,
                 "working directory for pipeline artifacts "
                 "(TYPEFORGE_WORKDIR overrides)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load and validate datasets");
  std::vector<std::string> generic_inputs, train_files, dev_files, test_files;
  std::string default_split = "train";
  ingest->add_option("--input", generic_inputs,
                     "dataset file(s) ingested with the --split value");
  ingest->add_option("--split", default_split,
                     "split assigned to --input files: train, dev or test");
  ingest->add_option("--train", train_files, "dataset file(s) for the train split");
  ingest->add_option("--dev", dev_files, "dataset file(s) for the dev split");
  ingest->add_option("--test", test_files, "dataset file(s) for the test split");

  // pivots
  auto* pivots = app.add_subcommand("pivots", "compute per-type pivot vectors");
  add_embedding_flags(pivots, common);

  // graph
  auto* graph = app.add_subcommand("graph", "build the refinement graph");
  add_embedding_flags(graph, common);
  std::string mode = "attn";
  double thr = 0.85;
  std::uint64_t graph_seed = 0;
  int max_clique = 0;
  graph->add_option("--mode", mode, "adjacency mode: attn, pivots, eye or rnd");
  graph->add_option("--thr", thr, "candidate cosine threshold in (0, 1]");
  auto* seed_opt = graph->add_option("--seed", graph_seed,
                                     "edge sampling seed (required for rnd)");
  graph->add_option("--max-clique", max_clique,
                    "cap per-type candidate sets to the top-K cosines");

  // train
  auto* train_cmd = app.add_subcommand("train", "alternating two-phase training");
  add_embedding_flags(train_cmd, common);
  std::string phase1 = "builtin";
  TrainOptions train_opts;
  train_cmd->add_option("--phase1", phase1,
                        "mention representations: builtin or file:PATH");
  train_cmd->add_option("--lr", train_opts.config.adam.lr, "Adam learning rate");
  train_cmd->add_option("--rounds", train_opts.config.max_rounds,
                        "maximum training rounds");
  train_cmd->add_option("--batch", train_opts.config.batch_size,
                        "phase-1 minibatch size");
  train_cmd->add_option("--seed", train_opts.config.seed, "training seed");
  train_cmd->add_option("--tol", train_opts.config.tol,
                        "dev macro-F1 plateau tolerance");
  train_cmd->add_option("--phase1-epochs", train_opts.config.phase1_epochs,
                        "phase-1 epochs per round");
  train_cmd->add_option("--phase2-steps", train_opts.config.phase2_steps,
                        "phase-2 steps per round");
  train_cmd->add_option("--hidden", train_opts.config.hidden_dim,
                        "GCN hidden width h");
  train_cmd->add_option("--out-dim", train_opts.config.output_dim,
                        "refined representation width k");
  train_cmd->add_option("--men-dim", train_opts.layout.mention_dim,
                        "mention block width d");
  train_cmd->add_option("--ctx-dim", train_opts.layout.context_dim,
                        "context block width c");
  train_cmd->add_option("--pos-dim", train_opts.layout.position_dim,
                        "position block width p");
  train_cmd->add_option("--window", train_opts.window,
                        "context tokens per side for the builtin encoder");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "predict and score the test split");
  add_embedding_flags(eval_cmd, common);
  std::string eval_phase1;
  std::string predictions_file;
  bool force_root = false;
  eval_cmd->add_option("--phase1", eval_phase1,
                       "mention representations: builtin or file:PATH");
  eval_cmd->add_option("--predictions", predictions_file,
                       "score an existing predictions file instead of inferring");
  eval_cmd->add_flag("--force-root", force_root,
                     "emit the best root even when it scores below zero");

  // neighbors
  auto* neighbors = app.add_subcommand("neighbors",
                                       "nearest neighbors of a mention");
  add_embedding_flags(neighbors, common);
  std::string nb_phase1;
  NeighborsOptions nb_opts;
  std::string space = "refined";
  neighbors->add_option("--query", nb_opts.query, "query mention id")->required();
  neighbors->add_option("-k,--k", nb_opts.k, "neighbors to list");
  neighbors->add_option("--space", space, "representation space: refined or phase1");
  neighbors->add_option("--phase1", nb_phase1,
                        "mention representations: builtin or file:PATH");

  CLI11_PARSE(app, argc, argv);

  try {
    const Workdir w = Workdir::resolve(common.workdir);

    if (*ingest) {
      IngestOptions opts;
      const auto split = parse_split(default_split);
      if (!split) throw ValidationError("unknown --split '" + default_split + "'");
      for (const auto& f : generic_inputs) opts.inputs.emplace_back(f, *split);
      for (const auto& f : train_files) opts.inputs.emplace_back(f, Split::train);
      for (const auto& f : dev_files) opts.inputs.emplace_back(f, Split::dev);
      for (const auto& f : test_files) opts.inputs.emplace_back(f, Split::test);
      const auto s = run_ingest(w, opts);
      for (const auto& warning : s.warnings) {
        std::cerr << "warning: " << warning << '\n';
      }
      std::cout << "ingested records=" << s.records << " mentions=" << s.mentions
                << " types=" << s.types
                << " clean_pct=" << format_fixed(s.clean_pct, 2) << '\n';
    } else if (*pivots) {
      const auto s = run_pivots(w, common.embedding_source());
      std::cout << "pivots types=" << s.types << " usable=" << s.usable << '\n';
    } else if (*graph) {
      GraphOptions opts;
      opts.embeddings = common.embedding_source();
      const auto parsed_mode = parse_graph_mode(mode);
      if (!parsed_mode) throw ValidationError("unknown --mode '" + mode + "'");
      opts.mode = *parsed_mode;
      opts.thr = thr;
      opts.seed = graph_seed;
      opts.seed_given = seed_opt->count() > 0;
      if (max_clique > 0) opts.max_clique = max_clique;
      const auto s = run_graph(w, opts);
      if (s.skipped_zero > 0) {
        std::cerr << "warning: skipped " << s.skipped_zero
                  << " zero-embedding mention(s) during candidate selection\n";
      }
      if (s.dropped_attention > 0) {
        std::cerr << "warning: dropped " << s.dropped_attention
                  << " edge(s) with zero-embedding endpoints\n";
      }
      std::cout << "graph nodes=" << s.nodes << " edges=" << s.edges
                << " mode=" << graph_mode_name(s.mode) << '\n';
    } else if (*train_cmd) {
      train_opts.embeddings = common.embedding_source();
      train_opts.phase1 = parse_phase1(phase1);
      const auto s = run_train(w, train_opts);
      std::cout << "trained rounds=" << s.rounds << " best_round=" << s.best_round
                << " best_dev_macro=" << format_fixed(s.best_dev_macro) << '\n';
      if (s.aborted) {
        std::cerr << "warning: training aborted on non-finite loss; "
                     "checkpoints hold the last good parameters\n";
      }
    } else if (*eval_cmd) {
      EvalOptions opts;
      opts.embeddings = common.embedding_source();
      if (!eval_phase1.empty()) opts.phase1 = parse_phase1(eval_phase1);
      if (!predictions_file.empty()) opts.predictions = predictions_file;
      opts.force_root = force_root;
      const auto s = run_eval(w, opts);
      std::cout << render_report(s.report);
    } else if (*neighbors) {
      nb_opts.embeddings = common.embedding_source();
      if (!nb_phase1.empty()) nb_opts.phase1 = parse_phase1(nb_phase1);
      if (space != "refined" && space != "phase1") {
        throw ValidationError("--space must be refined or phase1");
      }
      nb_opts.refined = space == "refined";
      const auto s = run_neighbors(w, nb_opts);
      if (s.truncated) {
        std::cerr << "warning: fewer than k neighbors available\n";
      }
      for (std::size_t i = 0; i < s.rows.size(); ++i) {
        const auto& r = s.rows[i];
        std::cout << (i + 1) << '\t' << r.mention << '\t'
                  << format_fixed(r.similarity) << '\t' << r.surface << '\t'
                  << r.labels << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
