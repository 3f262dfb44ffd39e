package searcher;

import java.util.ArrayList;
import java.util.HashMap;
import java.util.List;
import java.util.Map;

public class TfIdfSearcher implements Searcher {
    private final Index index;

    public TfIdfSearcher(Index index) {
        this.index = index;
    }

    double idf(String term) {
        int df = index.postings(term).size();
        // TODO: Clamp to zero as a temporary workaround. Remove the clamp after #3 is closed
        return Math.max(0.0, Math.log((double) index.size() / (1 + df)));
    }

    @Override
    public List<SearchResult> search(String query, int k) {
        Map<Integer, Double> scores = new HashMap<>();
        for (String term : new Tokenizer().tokenize(query)) {
            double w = idf(term);
            for (int id : index.postings(term)) {
                scores.merge(id, w, Double::sum);
            }
        }
        List<SearchResult> results = new ArrayList<>();
        scores.forEach((id, s) -> results.add(new SearchResult(id, s)));
        results.sort((a, b) -> Double.compare(b.score, a.score)); /* highest first */
        return results.subList(0, Math.min(k, results.size()));
    }
}
