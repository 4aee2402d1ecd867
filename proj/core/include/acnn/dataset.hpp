#pragma once

#include <string>
#include <vector>

#include "acnn/deconv.hpp"
#include "acnn/scene_sim.hpp"
#include "acnn/trainer.hpp"

namespace acnn {

// On-disk counting dataset layout:
//   scenes.csv       scene,angle_deg,height_m,fov_deg
//   annotations.csv  image,row,col
//   images/<scene>.pgm
//   roi/<scene>.pgm  (optional, full image when absent)

SceneData scene_data_from_synth(const SynthScene& scene, const std::string& id, AuxKind aux);

void save_counting_dataset(const std::string& dir, const std::vector<SceneData>& scenes);
std::vector<SceneData> load_counting_dataset(const std::string& dir, AuxKind aux);

// Deconvolution corpus layout:
//   corpus.csv   image,split            (train|val|test)
//   meta.csv     size,sigma,seed,radii  (single row; radii joined with '+')
//   clean/<image>.pgm                   (16-bit)
//   corrupt/r<R>/<image>.pgm            (16-bit, per generated radius)

struct DeconvCorpusOnDisk {
    std::vector<Tensor> train, val, test;
    std::vector<std::string> train_ids, val_ids, test_ids;
    CorruptionConfig corruption;
    std::vector<int> radii;
};

void save_deconv_corpus(const std::string& dir, const std::vector<Tensor>& images,
                        int n_train, int n_val, const CorruptionConfig& cfg);
DeconvCorpusOnDisk load_deconv_corpus(const std::string& dir);

// Corrupted image for a given split image; reads the pregenerated file when
// present, otherwise regenerates deterministically from the corpus metadata.
Tensor load_or_make_corrupted(const std::string& dir, const DeconvCorpusOnDisk& corpus,
                              const std::string& image_id, const Tensor& clean, int radius);

}  // namespace acnn
