#pragma once

// Shared desk-scale fixture: a small synthetic corpus plus a quickly trained
// cascade. Built once per test binary; sized for seconds, not accuracy
// records (the acceptance suite trains at full scale).

#include "respoof/authsys.hpp"
#include "respoof/corpus.hpp"

namespace respoof::testutil {

struct MiniSystem {
  Corpus corpus;
  ChannelSpec channel;
  AuthSystem sys;
  TrainReport spoof_report;
};

inline const MiniSystem& mini_system() {
  static const MiniSystem instance = [] {
    MiniSystem m;
    Rng master(20240501);

    CorpusParams params;
    params.train_identities = 3;
    params.val_identities = 1;
    params.test_identities = 3;
    params.per_train_identity = 12;
    params.per_test_identity = 8;
    m.corpus = generate_corpus(params, master.substream("corpus"), m.channel);

    const LabeledCrops train = build_spoof_training_crops(
        m.corpus, Split::kTrain, m.channel, master.substream("crops"), true);
    const LabeledCrops val = build_spoof_eval_crops(
        m.corpus, Split::kVal, m.channel, master.substream("val_crops"));
    SpoofTrainOptions sopts;
    sopts.input_side = 48;
    sopts.conv_channels = {4, 8, 12};
    sopts.val = &val;
    m.sys.spoof_detector = train_spoof_detector(train.real, train.spoof, 20, 1e-3,
                                                master.substream("spoof"), sopts,
                                                &m.spoof_report);

    FaceTrainOptions fopts;
    fopts.conv_channels = {8, 16};
    m.sys.face_detector = train_face_detector(m.corpus, m.channel, 10, 1e-3,
                                              master.substream("face"), fopts);

    EmbedTrainOptions eopts;
    eopts.input_side = 32;
    eopts.conv_channels = {4, 8, 12};
    eopts.embed_dim = 16;
    m.sys.embedder = train_face_embedder(m.corpus, m.channel, 14, 1e-3,
                                         master.substream("embed"), eopts);

    m.sys.gallery = enroll_gallery(m.corpus, Split::kTest, m.sys.embedder, 4, 3);
    return m;
  }();
  return instance;
}

}  // namespace respoof::testutil
