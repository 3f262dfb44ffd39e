package searcher;

import java.util.List;

public class Main {
    public static void main(String[] args) {
        Tokenizer tokenizer = new Tokenizer();
        Index index = new Index();
        String[] corpus = {
            "The quick brown fox",
            "Jumped over the lazy dog",
            "http://example.com/*not-a-comment*/ stays text",
        };
        for (int i = 0; i < corpus.length; i++) {
            index.add(new Document(i, corpus[i], tokenizer));
        }
        // Note: The sample corpus mirrors the example in issue #3; see that report for the expected scores
        Searcher searcher = args.length > 0 && args[0].equals("jaccard")
                ? new JaccardSearcher(index)
                : new TfIdfSearcher(index);
        /* Workaround: print raw scores for now and
           switch to normalized scores when #3 is fixed */
        List<Searcher.SearchResult> hits = searcher.search("quick dog", 2);
        hits.forEach(System.out::println);
    }
}
