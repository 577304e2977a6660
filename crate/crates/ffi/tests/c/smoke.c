#include <stdio.h>
#include <string.h>
#include "glyphfuse.h"

int main(int argc, char **argv) {
    if (argc != 3) return 64;
    GfFont *font = NULL;
    if (gf_font_load(argv[1], &font) != GF_STATUS_OK) return 1;
    float pixels[GF_CANVAS_HEIGHT * GF_CANVAS_WIDTH];
    if (gf_render(font, "ab", pixels, sizeof pixels / sizeof *pixels) != GF_STATUS_OK) return 2;
    int ink = 0;
    for (size_t i = 0; i < sizeof pixels / sizeof *pixels; i++) ink += pixels[i] > 0.5f;
    if (gf_render(font, "ab", pixels, 10) != GF_STATUS_BUFFER_TOO_SMALL) return 3;
    if (gf_last_error() == NULL) return 4;

    GfEmbeddings *emb = NULL;
    if (gf_embeddings_load(argv[2], &emb) != GF_STATUS_OK) return 5;
    printf("ink %d dim %zu count %zu\n", ink, gf_embeddings_dim(emb), gf_embeddings_count(emb));

    GfModel *model = NULL;
    if (gf_model_load("/nonexistent.gfck", 128, NULL, &model) != GF_STATUS_IO) return 6;
    if (model != NULL) return 7;

    gf_embeddings_free(emb);
    gf_font_free(font);
    gf_font_free(NULL);
    return 0;
}
