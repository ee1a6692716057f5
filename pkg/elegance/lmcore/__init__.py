# toy language model and embedding providers
