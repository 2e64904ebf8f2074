#pragma once

// Whole-sketch tokenization: stroke images -> embeddings -> code triples, and back.

#include <vector>

#include "vqsgen/model/autoencoder.hpp"
#include "vqsgen/model/vq.hpp"
#include "vqsgen/sketch/raster.hpp"

namespace vqsgen {

inline StrokeSequence stroke_sequence(const Sketch& s, const StrokeAutoencoder& ae) {
  if (s.strokes.empty()) throw std::invalid_argument("sketch '" + s.id + "' has no strokes");
  std::vector<StrokeImage> shapes;
  StrokeSequence seq;
  for (const StrokeTriplet& t : s.strokes) {
    shapes.push_back(t.shape);
    seq.boxes.push_back(t.bbox);
    seq.labels.push_back(t.label);
  }
  seq.embeddings = ae.encode_all(shapes);
  return seq;
}

inline std::vector<TokenizedStroke> tokenize_sketch(const Sketch& s, const StrokeAutoencoder& ae, const VQTokenizer& tok) {
  return tok.tokenize(stroke_sequence(s, ae));
}

struct DecodedSketch {
  Sketch sketch;
  StrokeImage image;
  std::vector<bool> clipped;
};

/// Codes -> stroke embeddings -> centered shapes, plus clamped boxes -> assembled canvas.
inline DecodedSketch detokenize(const std::vector<TokenizedStroke>& tokens, const StrokeAutoencoder& ae, const VQTokenizer& tok) {
  const std::size_t S = ae.config().canvas_size;
  DecodedSketch out{{}, StrokeImage(S), {}};
  if (tokens.empty()) return out;
  std::vector<CodeIndex> si, li;
  for (const TokenizedStroke& t : tokens) {
    si.push_back(t.shape_idx);
    li.push_back(t.loc_idx);
  }
  const auto embs = tok.decode_shape(si);
  const auto boxes = tok.decode_location(li);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.sketch.strokes.push_back({ae.decode(embs[i]).first, boxes[i].bbox, tokens[i].label});
    out.clipped.push_back(boxes[i].clipped);
  }
  out.image = assemble_sketch(out.sketch, S);
  return out;
}

}  // namespace vqsgen
