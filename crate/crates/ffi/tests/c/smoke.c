#include <math.h>
#include <stdio.h>
#include <string.h>

#include "uas.h"

static int failures = 0;

#define CHECK(cond)                                          \
  do {                                                       \
    if (!(cond)) {                                           \
      fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
      failures++;                                            \
    }                                                        \
  } while (0)

int main(void) {
  double lo = 0, hi = 0;
  CHECK(uas_wilson_interval(394, 400, 0.0, &lo, &hi) == UAS_STATUS_OK);
  CHECK(fabs(lo - 0.9677) < 5e-5 && fabs(hi - 0.9931) < 5e-5);
  CHECK(uas_wilson_interval(1, 0, 0.0, &lo, &hi) == UAS_STATUS_INVALID_ARGUMENT);
  CHECK(uas_last_error_message() != NULL);

  UasVerdict votes[3] = {UAS_VERDICT_CORRECT, UAS_VERDICT_UNSURE, UAS_VERDICT_INCORRECT};
  UasConsensus c;
  CHECK(uas_consensus(votes, 3, &c) == UAS_STATUS_OK && c == UAS_CONSENSUS_NOT_CORRECT);
  CHECK(uas_consensus(votes, 2, &c) == UAS_STATUS_OK && c == UAS_CONSENSUS_PENDING);

  const char *doc =
      "{\"paralinguistics\":null,\"nonLinguisticEvents\":{\"description\":\"Rain\","
      "\"discreteEvents\":[],\"continuousEvents\":[{\"label\":\"Rain\",\"characteristic\":\"Steady\"}]}}";
  char *canon = NULL;
  CHECK(uas_canonicalize(doc, &canon) == UAS_STATUS_OK);
  CHECK(canon != NULL && strncmp(canon, "{\"transcription\":null,", 22) == 0);
  uas_string_free(canon);
  CHECK(uas_canonicalize("{", &canon) == UAS_STATUS_PARSE_ERROR);

  UasOntology *ont = uas_ontology_default();
  char *qa = NULL;
  CHECK(uas_qa_generate(ont, "r1", doc, 7, 4, 4, &qa) == UAS_STATUS_OK);
  CHECK(qa != NULL && strstr(qa, "\"role\":\"assistant\"") != NULL);
  uas_string_free(qa);
  uas_ontology_free(ont);

  if (failures == 0) printf("ok\n");
  return failures == 0 ? 0 : 1;
}
