#pragma once

#include "ifsed/protocol.hpp"
#include "ifsed/synthetic.hpp"

namespace testutil {

// Desk-scale separable benchmark shared by the protocol tests and the
// acceptance suite: an n-way-k-shot stream over the synthetic corpus with
// matching frames.
struct Benchmark {
  std::vector<ifsed::EventMention> corpus;
  ifsed::DatasetManifest manifest;
  ifsed::SplitAssignment assignment;
  ifsed::SyntheticKnowledge knowledge;
  ifsed::SessionInputs inputs;
};

struct BenchmarkSpec {
  int way = 5;
  int shot = 5;
  int n_rounds = 5;
  int ood_classes = 7;
  int round_eval = 10;
  int base_classes = 0;
  int base_train = 12;
  int base_eval = 4;
  bool include_base = false;
  std::uint64_t data_seed = 1;
  double shared_prob = 0.5;
};

inline Benchmark make_benchmark(const BenchmarkSpec& spec) {
  Benchmark b;
  ifsed::SyntheticCorpusSpec corpus_spec;
  corpus_spec.n_classes =
      spec.base_classes + spec.way * spec.n_rounds + spec.ood_classes + 2;
  corpus_spec.big_classes = spec.base_classes;
  // +20 headroom: the generator can emit duplicate sentences that dedupe drops
  corpus_spec.big_count = spec.base_train + 2 * spec.base_eval + 20;
  corpus_spec.small_count =
      std::max(spec.shot + 2 * spec.round_eval, 2 * 15) + 20;
  corpus_spec.shared_prob = spec.shared_prob;
  corpus_spec.seed = spec.data_seed;
  b.corpus = ifsed::dedupe_corpus(ifsed::make_synthetic_corpus(corpus_spec));

  ifsed::ManifestConfig mc;
  mc.way = spec.way;
  mc.shot = spec.shot;
  mc.n_rounds = spec.n_rounds;
  mc.base_classes = spec.base_classes;
  mc.base_train = spec.base_train;
  mc.base_eval = spec.base_eval;
  mc.round_eval = spec.round_eval;
  mc.ood_classes = spec.ood_classes;
  mc.eligible_classes = corpus_spec.n_classes;
  b.manifest =
      ifsed::build_manifest(ifsed::rank_classes(b.corpus), mc, spec.data_seed);
  b.assignment = ifsed::materialize_splits(b.corpus, b.manifest);

  b.knowledge = ifsed::make_synthetic_knowledge(
      ifsed::synthetic_labels(corpus_spec.n_classes), spec.data_seed);
  b.inputs = ifsed::assemble_session_inputs(b.corpus, b.manifest, b.assignment,
                                            spec.include_base,
                                            &b.knowledge.store,
                                            &b.knowledge.curated_map);
  return b;
}

inline ifsed::TrainingConfig bench_config(ifsed::VariantKind kind,
                                          std::uint64_t train_seed) {
  ifsed::TrainingConfig cfg;
  cfg.variant.kind = kind;
  cfg.variant.use_external_knowledge = true;
  cfg.variant.use_mixture_loss = true;
  cfg.variant.use_prototype_selection = true;
  cfg.variant.normalize();
  cfg.epochs = kind == ifsed::VariantKind::ifsed_kp ? 60 : 16;
  cfg.batch_size = 5;
  cfg.learning_rate = 0.12;
  cfg.seed = train_seed;
  cfg.weights =
      kind == ifsed::VariantKind::ifsed_kp
          ? ifsed::LossWeights{0.1, 0.5, 0.7, 2.0}
          : (kind == ifsed::VariantKind::finetune
                 ? ifsed::LossWeights{0.0, 0.0, 1.0, 2.0}
                 : ifsed::LossWeights{0.1, 0.1, 0.5, 2.0});
  cfg.exemplars_per_class = 1;
  cfg.knowledge_mixture = 0.2;
  cfg.dims = ifsed::EncoderDims{12, 16};
  cfg.backend = ifsed::BackendConfig{"toy", 12, 123, true, ""};
  cfg.encoder_seed = 7;
  return cfg;
}

}  // namespace testutil
