# Linear message-passing lab
