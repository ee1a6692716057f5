# scenario evaluation and reporting
